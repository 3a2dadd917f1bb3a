import math
from typing import Any, Iterable, Sequence


class InputValidator:

    @staticmethod
    def is_finite(value: Any) -> bool:
        try:
            return math.isfinite(float(value))
        except (TypeError, ValueError):
            return False

    @staticmethod
    def is_in_range(value: float, min_value: float, max_value: float) -> bool:
        if not InputValidator.is_finite(value):
            return False
        return min_value <= float(value) <= max_value

    @staticmethod
    def validate_positive(value: int, field_name: str) -> int:
        if not isinstance(value, (int,)) or isinstance(value, bool) or value < 1:
            raise ValueError(f"{field_name} must be a positive integer")
        return value

    @staticmethod
    def validate_non_negative(value: float, field_name: str) -> float:
        if not InputValidator.is_finite(value) or float(value) < 0:
            raise ValueError(f"{field_name} cannot be negative")
        return value

    @staticmethod
    def validate_unit_interval(value: float, field_name: str) -> float:
        if not InputValidator.is_in_range(value, 0.0, 1.0):
            raise ValueError(f"{field_name} must be between 0.0 and 1.0")
        return value

    @staticmethod
    def validate_choice(value: str, valid_choices: Sequence[str], field_name: str) -> str:
        if value not in valid_choices:
            raise ValueError(f"{field_name} must be one of: {', '.join(valid_choices)}")
        return value

    @staticmethod
    def validate_indices(values: Iterable[int], upper: int, field_name: str) -> None:
        for value in values:
            if not 0 <= int(value) < upper:
                raise ValueError(f"{field_name} index {value} is outside [0, {upper})")
