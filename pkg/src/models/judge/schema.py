from dataclasses import dataclass
from typing import Optional

from src.utils.errors import SchemaError


@dataclass(frozen=True)
class JudgeReply:
    raw: str
    parsed: Optional[float]
    latency: float

    def __post_init__(self):
        if self.parsed is not None and not 0.0 <= self.parsed <= 1.0:
            raise SchemaError("Parsed judge value must be in [0, 1]")
        if self.latency < 0:
            raise SchemaError("Latency cannot be negative")
