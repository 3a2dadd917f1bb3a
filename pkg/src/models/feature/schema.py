from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np

from src.utils.errors import SchemaError
from src.utils.file_handler.array_codec import list_to_vector, vector_to_list
from src.utils.file_handler.json_handler import decimal9

ActivationMap = Dict[int, np.ndarray]


@dataclass(frozen=True)
class ThresholdPolicy:
    lo: float = 0.05
    hi: float = 0.9

    def __post_init__(self):
        if not 0.0 <= self.lo < self.hi <= 1.0:
            raise SchemaError("Threshold policy needs 0 <= lo < hi <= 1")

    def to_dict(self) -> Dict[str, Any]:
        return {'kind': 'threshold', 'lo': self.lo, 'hi': self.hi}


@dataclass(frozen=True)
class TopBottomPolicy:
    n_uncertain: int
    n_certain: int

    def __post_init__(self):
        if self.n_uncertain < 1 or self.n_certain < 1:
            raise SchemaError("Top/bottom counts must be at least 1")

    def to_dict(self) -> Dict[str, Any]:
        return {'kind': 'topbottom', 'n_uncertain': self.n_uncertain, 'n_certain': self.n_certain}


ContrastivePolicy = Union[ThresholdPolicy, TopBottomPolicy]


def _activation_shape(activations: ActivationMap) -> Tuple[Tuple[int, ...], int]:
    layers = tuple(sorted(activations))
    sizes = {np.asarray(vector).shape for vector in activations.values()}
    if len(sizes) != 1:
        raise SchemaError("Activation vectors within one item must share d_model")
    shape = sizes.pop()
    if len(shape) != 1:
        raise SchemaError("Activations must be vectors")
    return layers, shape[0]


@dataclass
class ContrastiveSets:
    uncertain: List[ActivationMap]
    certain: List[ActivationMap]
    metadata: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if not self.uncertain:
            raise SchemaError("D_uncertain is empty")
        if not self.certain:
            raise SchemaError("D_certain is empty")
        expected = _activation_shape(self.uncertain[0])
        for item in self.uncertain + self.certain:
            if _activation_shape(item) != expected:
                raise SchemaError("All contrastive activations must share d_model and layer set")

    @property
    def layers(self) -> Tuple[int, ...]:
        return _activation_shape(self.uncertain[0])[0]

    @property
    def d_model(self) -> int:
        return _activation_shape(self.uncertain[0])[1]

    def stack(self, layer: int) -> Tuple[np.ndarray, np.ndarray]:
        """(uncertain, certain) activation matrices for one layer, float64."""
        if layer not in self.layers:
            raise SchemaError(f"Layer {layer} was not captured")
        uncertain = np.stack([np.asarray(item[layer], dtype=np.float64) for item in self.uncertain])
        certain = np.stack([np.asarray(item[layer], dtype=np.float64) for item in self.certain])
        return uncertain, certain


@dataclass
class FeatureDirection:
    d_model: int
    layers: Dict[int, np.ndarray]
    meta: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if not self.layers:
            raise SchemaError("FeatureDirection needs at least one layer")
        self.layers = {
            int(layer): np.asarray(vector, dtype=np.float32)
            for layer, vector in sorted(self.layers.items())
        }
        for layer, vector in self.layers.items():
            if layer < 0:
                raise SchemaError("Layer indices cannot be negative")
            if vector.shape != (self.d_model,):
                raise SchemaError(f"Layer {layer} vector has length {vector.shape}, expected {self.d_model}")
            if not np.all(np.isfinite(vector)):
                raise SchemaError(f"Layer {layer} vector is not finite")

    @property
    def window(self) -> Tuple[int, ...]:
        return tuple(self.layers)

    @property
    def normalized(self) -> bool:
        return bool(self.meta.get('normalized', False))

    def unit_normalized(self) -> 'FeatureDirection':
        """Unit vectors per layer; zero vectors stay zero."""
        vectors = {}
        for layer, vector in self.layers.items():
            norm = float(np.linalg.norm(vector.astype(np.float64)))
            vectors[layer] = vector / norm if norm > 0 else vector
        return FeatureDirection(self.d_model, vectors, dict(self.meta, normalized=True))

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'FeatureDirection':
        try:
            return cls(
                d_model=int(data['d_model']),
                layers={int(layer): list_to_vector(values) for layer, values in data['layers'].items()},
                meta=dict(data.get('meta', {}))
            )
        except (KeyError, AttributeError) as e:
            raise SchemaError(f"Malformed feature direction: {str(e)}") from e

    def to_dict(self) -> Dict[str, Any]:
        return {
            'd_model': self.d_model,
            'layers': {str(layer): vector_to_list(vector) for layer, vector in self.layers.items()},
            'meta': self.meta
        }


@dataclass
class Projection2D:
    points: np.ndarray
    labels: List[str]
    explained_variance: Tuple[float, float]
    separability: float
    layer: Optional[int] = None

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64)
        if self.points.ndim != 2 or self.points.shape[1] != 2:
            raise SchemaError("Projection points must be an n x 2 matrix")
        if len(self.labels) != self.points.shape[0]:
            raise SchemaError("Need one label per projected point")
        first, second = self.explained_variance
        if not (0.0 <= second <= first <= 1.0 + 1e-9):
            raise SchemaError("Explained-variance fractions must satisfy 0 <= second <= first <= 1")
        if not 0.0 <= self.separability <= 1.0:
            raise SchemaError("Separability must be in [0, 1]")

    def to_dict(self) -> Dict[str, Any]:
        return {
            'layer': self.layer,
            'explained_variance': [decimal9(value) for value in self.explained_variance],
            'separability': decimal9(self.separability),
            'points': [
                {'x': decimal9(x), 'y': decimal9(y), 'label': label}
                for (x, y), label in zip(self.points.tolist(), self.labels)
            ]
        }
