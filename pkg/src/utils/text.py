import hashlib
import re
from typing import Iterable

import numpy as np

_PUNCTUATION = re.compile(r"[^\w\s]")
_WHITESPACE = re.compile(r"\s+")
_LEADING_ARTICLE = re.compile(r"^(?:the|a|an)\s+")


def collapse_whitespace(text: str) -> str:
    return _WHITESPACE.sub(" ", text).strip()


def normalize_answer(text: str) -> str:
    """Lowercase, drop punctuation and a leading article, collapse whitespace."""
    text = _PUNCTUATION.sub("", text.lower())
    text = collapse_whitespace(text)
    return _LEADING_ARTICLE.sub("", text)


def normalize_key(text: str) -> str:
    return collapse_whitespace(text.lower())


def contains_either(a: str, b: str) -> bool:
    """Normalized containment in either direction; empty strings only match each other."""
    left, right = normalize_answer(a), normalize_answer(b)
    if not left or not right:
        return left == right
    return left in right or right in left


def char_ngrams(text: str, n: int) -> Iterable[str]:
    if len(text) < n:
        return [text] if text else []
    return [text[i:i + n] for i in range(len(text) - n + 1)]


def _bucket(gram: str, dim: int) -> int:
    digest = hashlib.blake2b(gram.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little") % dim


def char_ngram_vector(text: str, n: int = 3, dim: int = 1024) -> np.ndarray:
    """Unit-norm hashed bag of character n-grams over the lowercased, stripped text.

    Empty input maps to the zero vector.
    """
    vector = np.zeros(dim, dtype=np.float64)
    for gram in char_ngrams(text.lower().strip(), n):
        vector[_bucket(gram, dim)] += 1.0
    norm = np.linalg.norm(vector)
    return vector / norm if norm > 0 else vector
