import hashlib
import json
import os
import tempfile
from pathlib import Path
from typing import Dict, List, Any, Iterable, Union
from src.utils.errors import DataError


class JSONHandlerError(DataError):
    pass


def decimal9(value: float) -> float:
    return float(f"{float(value):.9g}")


class JSONHandler:

    @staticmethod
    def dumps(data: Any, indent: int = 2) -> str:
        try:
            return json.dumps(data, indent=indent, ensure_ascii=False, sort_keys=True, allow_nan=False)
        except (TypeError, ValueError) as e:
            raise JSONHandlerError(f"Data is not JSON serializable: {str(e)}") from e

    @staticmethod
    def dumps_line(data: Any) -> str:
        try:
            return json.dumps(data, ensure_ascii=False, sort_keys=True, allow_nan=False, separators=(",", ":"))
        except (TypeError, ValueError) as e:
            raise JSONHandlerError(f"Data is not JSON serializable: {str(e)}") from e

    @staticmethod
    def read_json(file_path: Path) -> Dict[str, Any]:
        if not file_path.exists():
            raise JSONHandlerError(f"JSON file not found: {file_path}")

        if not file_path.is_file():
            raise JSONHandlerError(f"Path is not a file: {file_path}")

        try:
            with open(file_path, 'r', encoding='utf-8') as file:
                return json.load(file)
        except json.JSONDecodeError as e:
            raise JSONHandlerError(f"Invalid JSON format in {file_path}: {str(e)}") from e
        except UnicodeDecodeError as e:
            raise JSONHandlerError(f"File is not valid UTF-8: {file_path}") from e

    @staticmethod
    def write_json(file_path: Path, data: Any, indent: int = 2) -> str:
        text = JSONHandler.dumps(data, indent=indent) + "\n"
        JSONHandler.write_text_atomic(file_path, text)
        return JSONHandler.content_hash(text.encode("utf-8"))

    @staticmethod
    def read_jsonl(file_path: Path) -> List[Dict[str, Any]]:
        if not file_path.exists():
            raise JSONHandlerError(f"JSONL file not found: {file_path}")

        items = []
        try:
            with open(file_path, 'r', encoding='utf-8') as file:
                for line_number, line in enumerate(file, start=1):
                    if not line.strip():
                        raise JSONHandlerError(f"{file_path}: line {line_number} is empty")
                    try:
                        item = json.loads(line)
                    except json.JSONDecodeError as e:
                        raise JSONHandlerError(f"{file_path}: line {line_number} is not valid JSON: {e.msg}") from e
                    if not isinstance(item, dict):
                        raise JSONHandlerError(f"{file_path}: line {line_number} must be a JSON object")
                    items.append(item)
        except UnicodeDecodeError as e:
            raise JSONHandlerError(f"File is not valid UTF-8: {file_path}") from e
        return items

    @staticmethod
    def write_jsonl(file_path: Path, items: Iterable[Dict[str, Any]]) -> str:
        text = "".join(JSONHandler.dumps_line(item) + "\n" for item in items)
        JSONHandler.write_text_atomic(file_path, text)
        return JSONHandler.content_hash(text.encode("utf-8"))

    @staticmethod
    def write_text_atomic(file_path: Path, text: str) -> None:
        file_path = Path(file_path)
        try:
            file_path.parent.mkdir(parents=True, exist_ok=True)
            fd, tmp_name = tempfile.mkstemp(dir=file_path.parent, prefix=f".{file_path.name}.", suffix=".tmp")
            try:
                with os.fdopen(fd, 'w', encoding='utf-8', newline="\n") as file:
                    file.write(text)
                os.replace(tmp_name, file_path)
            except BaseException:
                if os.path.exists(tmp_name):
                    os.unlink(tmp_name)
                raise
        except OSError as e:
            raise JSONHandlerError(f"Error writing file {file_path}: {str(e)}") from e

    @staticmethod
    def content_hash(data: Union[bytes, str]) -> str:
        if isinstance(data, str):
            data = data.encode("utf-8")
        return hashlib.sha256(data).hexdigest()

    @staticmethod
    def file_hash(file_path: Path) -> str:
        return JSONHandler.content_hash(Path(file_path).read_bytes())

    @staticmethod
    def file_exists(file_path: Path) -> bool:
        return file_path.exists() and file_path.is_file()
