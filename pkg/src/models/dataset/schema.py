from dataclasses import dataclass
from typing import Any, Dict, List

from src.utils.errors import SchemaError


@dataclass(frozen=True)
class QARecord:
    id: str
    question: str
    gold: List[str]

    def __post_init__(self):
        if not isinstance(self.id, str) or not self.id.strip():
            raise SchemaError("Record id must be a non-empty string")
        if not isinstance(self.question, str) or not self.question.strip():
            raise SchemaError(f"Record {self.id}: question must be a non-empty string")
        if not isinstance(self.gold, (list, tuple)) or not all(isinstance(alias, str) for alias in self.gold):
            raise SchemaError(f"Record {self.id}: gold must be a list of strings")
        if not self.gold:
            raise SchemaError(f"Record {self.id}: gold must not be empty")
        object.__setattr__(self, 'gold', list(self.gold))

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'QARecord':
        for key in ('id', 'question', 'gold'):
            if key not in data:
                raise SchemaError(f"missing field \"{key}\"")
        return cls(id=data['id'], question=data['question'], gold=data['gold'])

    def to_dict(self) -> Dict[str, Any]:
        return {'id': self.id, 'question': self.question, 'gold': list(self.gold)}
