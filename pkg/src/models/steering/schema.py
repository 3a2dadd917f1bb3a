import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence, Tuple, Union

from src.models.feature.schema import FeatureDirection
from src.models.tinylm.schema import PositionPolicy
from src.utils.errors import SchemaError


@dataclass(frozen=True)
class ConstantAlpha:
    alpha: float

    def __post_init__(self):
        if not math.isfinite(self.alpha):
            raise SchemaError("alpha must be finite")


@dataclass(frozen=True)
class AdaptiveAlpha:
    max_alpha: float

    def __post_init__(self):
        if not math.isfinite(self.max_alpha) or self.max_alpha < 0:
            raise SchemaError("max_alpha must be finite and non-negative")


SteeringMode = Union[ConstantAlpha, AdaptiveAlpha]


@dataclass(frozen=True, eq=False)
class SteeringConfig:
    direction: FeatureDirection
    window: Tuple[int, ...]
    mode: SteeringMode = AdaptiveAlpha(1.0)
    positions: PositionPolicy = PositionPolicy.ALL_TOKENS

    def __post_init__(self):
        object.__setattr__(self, 'window', tuple(sorted(int(layer) for layer in self.window)))
        if not self.window:
            raise SchemaError("Steering window needs at least one layer")
        missing = [layer for layer in self.window if layer not in self.direction.layers]
        if missing:
            raise SchemaError(f"Steering window layers {missing} are missing from the feature direction")
        if not isinstance(self.mode, (ConstantAlpha, AdaptiveAlpha)):
            raise SchemaError("Steering mode must be ConstantAlpha or AdaptiveAlpha")

    @classmethod
    def build(
        cls,
        direction: FeatureDirection,
        window: Optional[Sequence[int]] = None,
        max_alpha: float = 1.0,
        positions: PositionPolicy = PositionPolicy.ALL_TOKENS,
        normalize: bool = False,
        alpha: Optional[float] = None
    ) -> 'SteeringConfig':
        """Adaptive mode capped at max_alpha, or constant mode when alpha is given."""
        if normalize and not direction.normalized:
            direction = direction.unit_normalized()
        return cls(
            direction=direction,
            window=tuple(window) if window is not None else direction.window,
            mode=ConstantAlpha(float(alpha)) if alpha is not None else AdaptiveAlpha(float(max_alpha)),
            positions=positions
        )

    def with_alpha(self, alpha: float) -> 'SteeringConfig':
        return replace(self, mode=ConstantAlpha(float(alpha)))

    @property
    def max_alpha(self) -> Optional[float]:
        return self.mode.max_alpha if isinstance(self.mode, AdaptiveAlpha) else None
