from pathlib import Path
from typing import Dict, Iterable, List, Optional

from src.models.dataset.schema import QARecord
from src.utils.errors import ConfigurationError, DataError, SchemaError
from src.utils.file_handler.json_handler import JSONHandler, JSONHandlerError
from src.utils.logger import get_logger

logger = get_logger(__name__)


class DatasetError(DataError):
    pass


class DatasetRepository:
    """QA records from one JSONL file, parsed strictly and cached."""

    def __init__(self, dataset_path: Path):
        self._dataset_file = Path(dataset_path)
        self._records_cache: Optional[List[QARecord]] = None
        self._validate_file_exists()

    def _validate_file_exists(self) -> None:
        if not JSONHandler.file_exists(self._dataset_file):
            raise ConfigurationError(f"Dataset file not found: {self._dataset_file}")

    def _load_records_from_file(self) -> List[QARecord]:
        try:
            rows = JSONHandler.read_jsonl(self._dataset_file)
        except JSONHandlerError as e:
            raise SchemaError(f"Failed to read dataset: {str(e)}") from e

        records: List[QARecord] = []
        seen: Dict[str, int] = {}
        for line_number, row in enumerate(rows, start=1):
            try:
                record = QARecord.from_dict(row)
            except SchemaError as e:
                raise SchemaError(f"{self._dataset_file}: line {line_number}: {str(e)}") from e
            if record.id in seen:
                raise DatasetError(
                    f"{self._dataset_file}: line {line_number}: duplicate id {record.id!r} "
                    f"(first seen on line {seen[record.id]})"
                )
            seen[record.id] = line_number
            records.append(record)

        if not records:
            raise DatasetError(f"No records found in {self._dataset_file}")
        logger.info("Loaded %d QA records from %s", len(records), self._dataset_file)
        return records

    def get_all_records(self, force_reload: bool = False) -> List[QARecord]:
        if self._records_cache is None or force_reload:
            self._records_cache = self._load_records_from_file()
        return self._records_cache.copy()

    def get_record_by_id(self, record_id: str) -> Optional[QARecord]:
        for record in self.get_all_records():
            if record.id == record_id:
                return record
        return None

    def get_record_count(self) -> int:
        return len(self.get_all_records())

    def golds_by_id(self) -> Dict[str, List[str]]:
        return {record.id: list(record.gold) for record in self.get_all_records()}


def ingest(path: Path) -> List[QARecord]:
    return DatasetRepository(path).get_all_records()


def emit(path: Path, records: Iterable[QARecord]) -> str:
    return JSONHandler.write_jsonl(Path(path), (record.to_dict() for record in records))
