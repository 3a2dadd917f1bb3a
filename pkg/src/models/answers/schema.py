import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from src.models.tinylm.schema import GenerationSample
from src.utils.errors import SchemaError
from src.utils.text import char_ngram_vector


@dataclass
class Answer:
    sample: GenerationSample
    vu: Optional[float] = None
    abstained: Optional[bool] = None

    def __post_init__(self):
        if self.vu is not None and not 0.0 <= self.vu <= 1.0:
            raise SchemaError(f"Answer VU must be in [0, 1], got {self.vu}")

    @property
    def text(self) -> str:
        return self.sample.text

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'Answer':
        return cls(
            sample=GenerationSample.from_dict(data['sample']),
            vu=data.get('vu'),
            abstained=data.get('abstained')
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            'sample': self.sample.to_dict(),
            'vu': self.vu,
            'abstained': self.abstained
        }


def is_partition(clusters: Sequence[int]) -> bool:
    """Ids numbered 0..k-1 in order of first appearance."""
    next_id = 0
    for cluster in clusters:
        if cluster == next_id:
            next_id += 1
        elif not 0 <= cluster < next_id:
            return False
    return True


@dataclass
class AnswerSet:
    question_id: str
    question: str
    most_likely: Answer
    samples: List[Answer]
    clusters: Optional[List[int]] = None

    def __post_init__(self):
        if not self.samples:
            raise SchemaError("AnswerSet needs at least one sample")
        if self.clusters is not None:
            if len(self.clusters) != len(self.samples):
                raise SchemaError("Need one cluster id per sample")
            if not is_partition(self.clusters):
                raise SchemaError("Cluster ids must number clusters 0..k-1 in order of first appearance")

    @property
    def n(self) -> int:
        return len(self.samples)

    @property
    def sample_texts(self) -> List[str]:
        return [answer.text for answer in self.samples]

    @property
    def sample_vus(self) -> List[float]:
        if any(answer.vu is None for answer in self.samples):
            raise SchemaError(f"Question {self.question_id} has unscored samples")
        return [answer.vu for answer in self.samples]

    @property
    def prefill_activations(self) -> Dict[int, np.ndarray]:
        activations = self.most_likely.sample.activations
        if activations is None:
            raise SchemaError(f"Question {self.question_id} has no captured prefill activations")
        return activations

    def all_answers(self) -> List[Answer]:
        return [self.most_likely] + self.samples

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'AnswerSet':
        try:
            return cls(
                question_id=str(data['question_id']),
                question=data['question'],
                most_likely=Answer.from_dict(data['most_likely']),
                samples=[Answer.from_dict(item) for item in data['samples']],
                clusters=data.get('clusters')
            )
        except (KeyError, TypeError) as e:
            raise SchemaError(f"Malformed answer set: {str(e)}") from e

    def to_dict(self) -> Dict[str, Any]:
        return {
            'question_id': self.question_id,
            'question': self.question,
            'most_likely': self.most_likely.to_dict(),
            'samples': [answer.to_dict() for answer in self.samples],
            'clusters': self.clusters
        }


@dataclass(frozen=True)
class UncertaintyScores:
    su: float
    su_norm: float
    vu: float
    n: int

    def __post_init__(self):
        if self.n < 1:
            raise SchemaError("UncertaintyScores needs n >= 1")
        if self.su < 0:
            raise SchemaError("Semantic entropy cannot be negative")
        if self.n >= 2 and self.su > math.log(self.n) + 1e-9:
            raise SchemaError(f"Semantic entropy {self.su} exceeds ln({self.n})")
        if not 0.0 <= self.su_norm <= 1.0:
            raise SchemaError("su_norm must be in [0, 1]")
        if not 0.0 <= self.vu <= 1.0:
            raise SchemaError("vu must be in [0, 1]")

    def with_vu(self, vu: float) -> 'UncertaintyScores':
        return UncertaintyScores(su=self.su, su_norm=self.su_norm, vu=vu, n=self.n)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'UncertaintyScores':
        return cls(su=float(data['su']), su_norm=float(data['su_norm']), vu=float(data['vu']), n=int(data['n']))

    def to_dict(self) -> Dict[str, Any]:
        return {'su': self.su, 'su_norm': self.su_norm, 'vu': self.vu, 'n': self.n}


@dataclass
class PrototypeBank:
    uncertain: List[str]
    certain: List[str]
    ngram: int = 3
    dim: int = 1024
    uncertain_vectors: np.ndarray = field(init=False, repr=False)
    certain_vectors: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if not self.uncertain or not self.certain:
            raise SchemaError("Prototype bank needs both uncertain and certain phrases")
        if self.ngram < 1 or self.dim < 1:
            raise SchemaError("Prototype bank ngram and dim must be positive")
        self.uncertain_vectors = self._embed(self.uncertain, "uncertain")
        self.certain_vectors = self._embed(self.certain, "certain")

    def embed(self, text: str) -> np.ndarray:
        return char_ngram_vector(text, self.ngram, self.dim)

    def _embed(self, phrases: List[str], side: str) -> np.ndarray:
        vectors = np.stack([self.embed(phrase) for phrase in phrases])
        if not np.allclose(np.linalg.norm(vectors, axis=1), 1.0):
            raise SchemaError(f"Every {side} prototype must contain at least one character")
        return vectors

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'PrototypeBank':
        try:
            return cls(
                uncertain=[str(phrase) for phrase in data['uncertain']],
                certain=[str(phrase) for phrase in data['certain']],
                ngram=int(data.get('ngram', 3)),
                dim=int(data.get('dim', 1024))
            )
        except KeyError as e:
            raise SchemaError(f"Prototype bank is missing field {e}") from e

    def to_dict(self) -> Dict[str, Any]:
        return {'uncertain': self.uncertain, 'certain': self.certain, 'ngram': self.ngram, 'dim': self.dim}
