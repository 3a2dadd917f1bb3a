from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, Optional, Tuple

import numpy as np

from src.utils.errors import SchemaError
from src.utils.file_handler.array_codec import list_to_vector, vector_to_list


class ProbeTarget(Enum):
    VU = "vu"
    SU = "su"
    SU_NORM = "su_norm"
    HALLUCINATION_PROXY = "hallucination_proxy"

    @property
    def bounded(self) -> bool:
        return self in (ProbeTarget.VU, ProbeTarget.SU_NORM)


class ProbeKind(Enum):
    REGRESSOR = "regressor"
    CLASSIFIER = "classifier"


@dataclass
class Probe:
    target: ProbeTarget
    kind: ProbeKind
    layers: Tuple[int, ...]
    d_model: int
    weights: np.ndarray
    ridge: float
    meta: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self.layers = tuple(int(layer) for layer in self.layers)
        self.weights = np.asarray(self.weights, dtype=np.float32)
        if not self.layers:
            raise SchemaError("Probe needs at least one layer")
        if self.ridge < 0:
            raise SchemaError("Probe ridge strength cannot be negative")
        expected = self.d_model * len(self.layers) + 1
        if self.weights.shape != (expected,):
            raise SchemaError(f"Probe weights have length {self.weights.size}, expected {expected}")
        if not np.all(np.isfinite(self.weights)):
            raise SchemaError("Probe weights must be finite")

    @property
    def coefficients(self) -> np.ndarray:
        return self.weights[:-1]

    @property
    def bias(self) -> float:
        return float(self.weights[-1])

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'Probe':
        try:
            return cls(
                target=ProbeTarget(data['target']),
                kind=ProbeKind(data['probe_kind']),
                layers=tuple(data['window']),
                d_model=int(data['d_model']),
                weights=list_to_vector(data['weights']),
                ridge=float(data['ridge']),
                meta=dict(data.get('meta', {}))
            )
        except (KeyError, ValueError) as e:
            raise SchemaError(f"Malformed probe: {str(e)}") from e

    def to_dict(self) -> Dict[str, Any]:
        return {
            'target': self.target.value,
            'probe_kind': self.kind.value,
            'window': list(self.layers),
            'd_model': self.d_model,
            'weights': vector_to_list(self.weights),
            'ridge': self.ridge,
            'meta': self.meta
        }


DETECTOR_FEATURES = ('su', 'vu')


@dataclass
class Detector:
    features: Tuple[str, ...]
    weights: np.ndarray
    threshold: float
    input_source: str = "calculated"

    def __post_init__(self):
        self.features = tuple(self.features)
        self.weights = np.asarray(self.weights, dtype=np.float32)
        if not self.features or any(name not in DETECTOR_FEATURES for name in self.features):
            raise SchemaError(f"Detector features must be drawn from {DETECTOR_FEATURES}")
        if self.weights.shape != (len(self.features) + 1,):
            raise SchemaError("Detector needs one weight per feature plus a bias")
        if not np.all(np.isfinite(self.weights)) or not np.isfinite(self.threshold):
            raise SchemaError("Detector weights and threshold must be finite")
        if self.input_source not in ("calculated", "predicted"):
            raise SchemaError("Detector input_source must be one of: calculated, predicted")

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'Detector':
        try:
            return cls(
                features=tuple(data['features']),
                weights=list_to_vector(data['weights']),
                threshold=float(data['threshold']),
                input_source=data.get('input_source', 'calculated')
            )
        except KeyError as e:
            raise SchemaError(f"Detector is missing field {e}") from e

    def to_dict(self) -> Dict[str, Any]:
        return {
            'features': list(self.features),
            'weights': vector_to_list(self.weights),
            'threshold': self.threshold,
            'input_source': self.input_source
        }


@dataclass
class LabeledExample:
    question_id: str
    features: np.ndarray
    hallucinated: bool
    abstained: bool
    correct: Optional[bool] = None

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.abstained and self.hallucinated:
            raise SchemaError(f"Abstained example {self.question_id} cannot be labeled hallucinated")
