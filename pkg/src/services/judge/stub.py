"""Offline judge endpoint for tests and air-gapped runs.

Replies are scripted by prompt hash and served through an httpx mock
transport, so the real OpenAI client code path is exercised without network.
"""
import hashlib
import json
import threading
from typing import Callable, Dict, List, Optional

import httpx


def prompt_hash(system_prompt: str, user_prompt: str) -> str:
    return hashlib.sha256(f"{system_prompt}\n\n{user_prompt}".encode("utf-8")).hexdigest()


def completion_payload(content: str, model: str, index: int) -> Dict:
    return {
        "id": f"stub-{index}",
        "object": "chat.completion",
        "created": 0,
        "model": model,
        "choices": [{
            "index": 0,
            "message": {"role": "assistant", "content": content},
            "finish_reason": "stop"
        }],
        "usage": {"prompt_tokens": 0, "completion_tokens": 0, "total_tokens": 0}
    }


class OfflineJudgeStub:

    def __init__(
        self,
        replies: Optional[Dict[str, str]] = None,
        default: Optional[Callable[[str, str], str]] = None,
        statuses: Optional[List[Optional[int]]] = None
    ):
        self.replies = dict(replies or {})
        self.default = default
        self.statuses = list(statuses or [])
        self.requests: List[Dict] = []
        self._lock = threading.Lock()

    def script(self, system_prompt: str, user_prompt: str, reply: str) -> None:
        self.replies[prompt_hash(system_prompt, user_prompt)] = reply

    @property
    def calls(self) -> int:
        return len(self.requests)

    def handle(self, request: httpx.Request) -> httpx.Response:
        body = json.loads(request.content.decode("utf-8"))
        with self._lock:
            self.requests.append(body)
            index = len(self.requests)
            status = self.statuses.pop(0) if self.statuses else 200

        if status is None:
            raise httpx.ConnectError("stub connection refused", request=request)
        if status != 200:
            return httpx.Response(status, json={"error": {"message": f"stub status {status}", "type": "stub"}})

        messages = body.get("messages", [])
        system_prompt = next((m["content"] for m in messages if m["role"] == "system"), "")
        user_prompt = next((m["content"] for m in messages if m["role"] == "user"), "")
        key = prompt_hash(system_prompt, user_prompt)
        if key in self.replies:
            content = self.replies[key]
        elif self.default is not None:
            content = self.default(system_prompt, user_prompt)
        else:
            return httpx.Response(404, json={"error": {"message": "no scripted reply", "type": "stub"}})
        return httpx.Response(200, json=completion_payload(content, body.get("model", "stub"), index))

    def http_client(self) -> httpx.Client:
        return httpx.Client(transport=httpx.MockTransport(self.handle))
