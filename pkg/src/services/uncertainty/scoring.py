import math
from pathlib import Path
from typing import List, Optional, Protocol, Sequence

import numpy as np

from src.config.settings import settings
from src.models.answers.schema import PrototypeBank
from src.utils.errors import SchemaError
from src.utils.file_handler.json_handler import JSONHandler
from src.utils.text import normalize_answer
from .clustering import UncertaintyInputError


class VUScorer(Protocol):
    name: str

    def __call__(self, question: str, answer: str) -> float:
        ...


def score_vu_lexical(answer: str, bank: PrototypeBank) -> float:
    if not answer or not answer.strip():
        raise UncertaintyInputError("Cannot score an empty answer")
    vector = bank.embed(answer)
    uncertain = float(np.max(bank.uncertain_vectors @ vector))
    certain = float(np.max(bank.certain_vectors @ vector))
    return min(max((uncertain - certain + 1.0) / 2.0, 0.0), 1.0)


def question_vu(answer_vus: Sequence[float]) -> float:
    if not answer_vus:
        raise UncertaintyInputError("question_vu needs at least one score")
    return math.fsum(answer_vus) / len(answer_vus)


def detect_abstention(answer: str, phrases: Sequence[str]) -> bool:
    if not phrases:
        raise UncertaintyInputError("Abstention phrase list is empty")
    normalized = normalize_answer(answer or "")
    if not normalized:
        return False
    return any(phrase and phrase in normalized for phrase in (normalize_answer(p) for p in phrases))


class LexicalVUScorer:
    """Prototype-similarity VU; an empty answer is scored as a punt (1.0)."""

    name = "lexical"

    def __init__(self, bank: PrototypeBank):
        self.bank = bank

    def __call__(self, question: str, answer: str) -> float:
        if not answer or not answer.strip():
            return 1.0
        return score_vu_lexical(answer, self.bank)


def load_prototype_bank(path: Optional[Path] = None) -> PrototypeBank:
    path = Path(path or settings.paths.prototypes_file)
    try:
        return PrototypeBank.from_dict(JSONHandler.read_json(path))
    except SchemaError as e:
        raise SchemaError(f"Invalid prototype bank {path}: {str(e)}") from e


def load_abstention_phrases(path: Optional[Path] = None) -> List[str]:
    path = Path(path or settings.paths.abstention_file)
    if not JSONHandler.file_exists(path):
        raise SchemaError(f"Abstention phrase file not found: {path}")
    phrases = [line.strip() for line in path.read_text(encoding="utf-8").splitlines()]
    phrases = [phrase for phrase in phrases if phrase and not phrase.startswith("#")]
    if not phrases:
        raise SchemaError(f"Abstention phrase file is empty: {path}")
    return phrases
