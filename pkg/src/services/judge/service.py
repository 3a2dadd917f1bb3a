import threading
from collections import OrderedDict
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Optional, Sequence, Tuple, TypeVar

from src.utils.logger import get_logger
from src.utils.text import normalize_key
from .client import JudgeClient, parse_decisiveness

logger = get_logger(__name__)

T = TypeVar("T")
R = TypeVar("R")


def score_vu_judge(question: str, answer: str, client: JudgeClient) -> float:
    """VU is one minus the judge's decisiveness."""
    reply = client.decisiveness_reply(question, answer)
    decisiveness = reply.parsed if reply.parsed is not None else parse_decisiveness(reply.raw)
    return 1.0 - decisiveness


def bounded_map(func: Callable[[T], R], items: Sequence[T], max_concurrent: int) -> List[R]:
    """Apply func with at most max_concurrent calls in flight; output keeps input order."""
    if max_concurrent <= 1 or len(items) <= 1:
        return [func(item) for item in items]
    with ThreadPoolExecutor(max_workers=max_concurrent) as pool:
        return list(pool.map(func, items))


class BoundedCache:
    """FIFO cache with a fixed capacity; access is serialized."""

    def __init__(self, capacity: int):
        self.capacity = capacity
        self._entries: "OrderedDict[Tuple[str, str], bool]" = OrderedDict()
        self._lock = threading.Lock()

    def __len__(self) -> int:
        return len(self._entries)

    def get(self, key: Tuple[str, str]) -> Optional[bool]:
        with self._lock:
            return self._entries.get(key)

    def put(self, key: Tuple[str, str], value: bool) -> None:
        with self._lock:
            self._entries[key] = value
            while len(self._entries) > self.capacity:
                evicted, _ = self._entries.popitem(last=False)
                logger.debug("Evicted entailment cache entry %s", evicted)


class EntailmentOracle:
    """Bidirectional entailment through the judge, cached by normalized unordered pair."""

    def __init__(self, client: JudgeClient, question: Optional[str] = None, cache: Optional[BoundedCache] = None):
        self.client = client
        self.question = question
        self.cache = cache or BoundedCache(client.config.cache_size)

    def __call__(self, a: str, b: str) -> bool:
        left, right = normalize_key(a), normalize_key(b)
        if left == right:
            return True
        key = (left, right) if left <= right else (right, left)
        cached = self.cache.get(key)
        if cached is not None:
            return cached
        result = self.client.entails(a, b, self.question) and self.client.entails(b, a, self.question)
        self.cache.put(key, result)
        return result


def entailment_oracle(client: JudgeClient, question: Optional[str] = None) -> EntailmentOracle:
    return EntailmentOracle(client, question)


class JudgeVUScorer:

    name = "judge"

    def __init__(self, client: JudgeClient):
        self.client = client

    def __call__(self, question: str, answer: str) -> float:
        if not answer or not answer.strip():
            return 1.0
        return score_vu_judge(question, answer, self.client)

    def score_many(self, pairs: Sequence[Tuple[str, str]]) -> List[float]:
        return bounded_map(lambda pair: self(*pair), pairs, self.client.config.max_concurrent)
