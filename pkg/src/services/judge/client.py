import random
import re
import time
from typing import Callable, Optional

import httpx
from openai import APIConnectionError, APIStatusError, OpenAI, OpenAIError

from src.config.settings import JudgeConfig, settings
from src.models.judge.schema import JudgeReply
from src.utils.errors import DataError, ExternalServiceError
from src.utils.logger import get_logger
from .prompts import JudgePromptBuilder

logger = get_logger(__name__)

DECISIVENESS_PATTERN = re.compile(r"decisiveness score\s*:\s*([-+]?(?:\d+\.?\d*|\.\d+))", re.IGNORECASE)


class JudgeTransportError(ExternalServiceError):

    def __init__(self, message: str, attempts: int):
        super().__init__(message)
        self.attempts = attempts


class JudgeRequestError(ExternalServiceError):

    def __init__(self, message: str, status_code: Optional[int] = None):
        super().__init__(message)
        self.status_code = status_code


class DecisivenessParseError(DataError):

    def __init__(self, message: str, raw: str):
        super().__init__(message)
        self.raw = raw


def parse_decisiveness(raw: str) -> float:
    """Value after the last "Decisiveness score:" marker, clamped to [0, 1]."""
    matches = DECISIVENESS_PATTERN.findall(raw or "")
    if not matches:
        raise DecisivenessParseError(f"No decisiveness score in judge reply: {raw!r}", raw=raw)
    return min(max(float(matches[-1]), 0.0), 1.0)


class JudgeClient:
    """Chat-completion client for an OpenAI-compatible judge endpoint."""

    def __init__(
        self,
        config: Optional[JudgeConfig] = None,
        http_client: Optional[httpx.Client] = None,
        sleep: Callable[[float], None] = time.sleep,
        jitter_seed: int = 0
    ):
        self.config = config or settings.judge()
        self._sleep = sleep
        self._jitter = random.Random(jitter_seed)
        self._prompt_builder = JudgePromptBuilder()
        self._client = self._initialize_client(http_client)

    def _initialize_client(self, http_client: Optional[httpx.Client]) -> OpenAI:
        try:
            return OpenAI(
                api_key=self.config.api_key or "unset",
                base_url=self.config.base_url,
                timeout=self.config.timeout,
                max_retries=0,
                http_client=http_client
            )
        except OpenAIError as e:
            raise JudgeRequestError(f"Failed to initialize judge client: {str(e)}") from e

    def _backoff(self, retry: int) -> float:
        delay = self.config.backoff_base * (self.config.backoff_factor ** retry)
        return delay + self.config.backoff_jitter * self._jitter.random()

    def _call(self, system_prompt: str, user_prompt: str) -> str:
        response = self._client.chat.completions.create(
            model=self.config.model_name,
            messages=[
                {"role": "system", "content": system_prompt},
                {"role": "user", "content": user_prompt}
            ],
            temperature=self.config.temperature
        )
        if not response.choices:
            raise JudgeRequestError("No choices returned from judge endpoint")
        content = response.choices[0].message.content
        if content is None:
            raise JudgeRequestError("Empty content returned from judge endpoint")
        return content

    def complete(self, system_prompt: str, user_prompt: str) -> str:
        attempts = 0
        last_error = ""
        while True:
            attempts += 1
            try:
                return self._call(system_prompt, user_prompt)
            except APIStatusError as e:
                if e.status_code < 500:
                    raise JudgeRequestError(
                        f"Judge rejected the request with status {e.status_code}: {e.message}",
                        status_code=e.status_code
                    ) from e
                last_error = f"status {e.status_code}"
            except APIConnectionError as e:
                last_error = f"connection error: {str(e)}"
            except OpenAIError as e:
                raise JudgeRequestError(f"Judge call failed: {str(e)}") from e

            retry = attempts - 1
            if retry >= self.config.max_retries:
                raise JudgeTransportError(
                    f"Judge request failed after {attempts} attempt(s); last error: {last_error}",
                    attempts=attempts
                )
            delay = self._backoff(retry)
            logger.info("Judge call failed (%s); retry %d in %.2fs", last_error, retry + 1, delay)
            self._sleep(delay)

    def decisiveness_reply(self, question: str, answer: str) -> JudgeReply:
        system_prompt, user_prompt = self._prompt_builder.build_decisiveness_prompt(question, answer)
        started = time.perf_counter()
        raw = self.complete(system_prompt, user_prompt)
        latency = time.perf_counter() - started
        try:
            parsed: Optional[float] = parse_decisiveness(raw)
        except DecisivenessParseError:
            parsed = None
        return JudgeReply(raw=raw, parsed=parsed, latency=latency)

    def entails(self, premise: str, hypothesis: str, question: Optional[str] = None) -> bool:
        system_prompt, user_prompt = self._prompt_builder.build_entailment_prompt(premise, hypothesis, question)
        reply = self.complete(system_prompt, user_prompt).strip().lower()
        return reply.startswith("yes")
