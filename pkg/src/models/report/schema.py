from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional

from src.models.answers.schema import UncertaintyScores
from src.utils.errors import SchemaError


class ResponseCategory(Enum):
    CORRECT = "correct"
    HALLUCINATED = "hallucinated"
    PARTLY_ABSTAINED = "partly_abstained"
    CONSISTENTLY_ABSTAINED = "consistently_abstained"

    @property
    def abstained(self) -> bool:
        return self in (ResponseCategory.PARTLY_ABSTAINED, ResponseCategory.CONSISTENTLY_ABSTAINED)


@dataclass(frozen=True)
class ThresholdSelection:
    threshold: float
    degenerate: bool = False
    low_mean: Optional[float] = None
    high_mean: Optional[float] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            'threshold': self.threshold,
            'degenerate': self.degenerate,
            'low_mean': self.low_mean,
            'high_mean': self.high_mean
        }


@dataclass(frozen=True)
class EvaluationRecord:
    question_id: str
    category: ResponseCategory
    scores: UncertaintyScores
    abstained: bool

    @property
    def correct(self) -> bool:
        return self.category is ResponseCategory.CORRECT

    @property
    def complying_incorrect(self) -> bool:
        return not self.abstained and not self.correct

    def to_dict(self) -> Dict[str, Any]:
        return {
            'question_id': self.question_id,
            'category': self.category.value,
            'scores': self.scores.to_dict(),
            'abstained': self.abstained
        }


METRIC_NAMES = (
    'confident_hallucination_rate',
    'correct_rate',
    'refusal_rate',
    'disagreement_rate',
    'pearson_su_vu',
    'vu_incorrect_mean',
    'vu_correct_mean',
)


@dataclass
class MetricsReport:
    confident_hallucination_rate: float
    correct_rate: float
    refusal_rate: float
    disagreement_rate: float
    pearson_su_vu: Optional[float]
    vu_incorrect_mean: Optional[float]
    vu_correct_mean: Optional[float]
    tau_su: float
    tau_vu: float
    n: int
    category_counts: Dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        if self.n <= 0:
            raise SchemaError("MetricsReport needs n > 0")
        for name in ('confident_hallucination_rate', 'correct_rate', 'refusal_rate', 'disagreement_rate'):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise SchemaError(f"{name} must be in [0, 1]")
        if self.pearson_su_vu is not None and not -1.0 <= self.pearson_su_vu <= 1.0:
            raise SchemaError("pearson_su_vu must be in [-1, 1]")
        for name in ('vu_incorrect_mean', 'vu_correct_mean'):
            value = getattr(self, name)
            if value is not None and not 0.0 <= value <= 1.0:
                raise SchemaError(f"{name} must be in [0, 1]")
        if self.category_counts and sum(self.category_counts.values()) != self.n:
            raise SchemaError("Category counts must sum to n")

    def metric(self, name: str) -> Optional[float]:
        if name not in METRIC_NAMES:
            raise SchemaError(f"Unknown metric: {name}")
        return getattr(self, name)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'MetricsReport':
        try:
            return cls(
                **{name: data[name] for name in METRIC_NAMES},
                tau_su=float(data['tau_su']),
                tau_vu=float(data['tau_vu']),
                n=int(data['n']),
                category_counts={str(k): int(v) for k, v in data.get('category_counts', {}).items()}
            )
        except KeyError as e:
            raise SchemaError(f"Report is missing field {e}") from e

    def to_dict(self) -> Dict[str, Any]:
        data = {name: getattr(self, name) for name in METRIC_NAMES}
        data.update({
            'tau_su': self.tau_su,
            'tau_vu': self.tau_vu,
            'n': self.n,
            'category_counts': dict(self.category_counts)
        })
        return data


@dataclass
class SweepResult:
    alphas: List[float]
    mean_vu: List[float]
    counts: List[int]

    def __post_init__(self):
        if not (len(self.alphas) == len(self.mean_vu) == len(self.counts)):
            raise SchemaError("Sweep columns must have equal lengths")
        if any(not 0.0 <= value <= 1.0 for value in self.mean_vu):
            raise SchemaError("Sweep mean VU values must be in [0, 1]")

    def rows(self) -> List[Dict[str, Any]]:
        return [
            {'alpha': alpha, 'mean_vu': vu, 'n': count}
            for alpha, vu, count in zip(self.alphas, self.mean_vu, self.counts)
        ]

    def to_dict(self) -> Dict[str, Any]:
        return {'alphas': list(self.alphas), 'mean_vu': list(self.mean_vu), 'counts': list(self.counts)}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'SweepResult':
        return cls(
            alphas=[float(value) for value in data['alphas']],
            mean_vu=[float(value) for value in data['mean_vu']],
            counts=[int(value) for value in data['counts']]
        )
