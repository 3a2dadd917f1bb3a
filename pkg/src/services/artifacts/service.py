"""Versioned artifact files.

JSON artifacts wrap their payload in a header of kind, schema_version and the
hash of the config that produced them. Generations are JSONL: the header is
the first line and every following line is one answer set.
"""
from pathlib import Path
from typing import Any, Callable, Dict, List, Sequence, Tuple

from src.models.answers.schema import AnswerSet
from src.models.feature.schema import FeatureDirection
from src.models.probe.schema import Detector, Probe
from src.models.report.schema import MetricsReport
from src.utils.errors import DataError, SchemaError
from src.utils.file_handler.json_handler import JSONHandler
from src.utils.logger import get_logger

logger = get_logger(__name__)

SCHEMA_VERSION = 1


class ArtifactVersionError(DataError):
    pass


def _identity(data: Any) -> Any:
    return data


DECODERS: Dict[str, Callable[[Any], Any]] = {
    'features': FeatureDirection.from_dict,
    'probe': Probe.from_dict,
    'detector': Detector.from_dict,
    'report': MetricsReport.from_dict,
    'cosine': _identity,
    'projection': _identity,
    'detection': _identity,
    'decisions': _identity,
    'manifest': _identity,
}

JSONL_KINDS = ('generations',)


def _header(kind: str, config_hash: str) -> Dict[str, Any]:
    return {'kind': kind, 'schema_version': SCHEMA_VERSION, 'config_hash': config_hash}


def _check_header(path: Path, header: Dict[str, Any], kind: str) -> None:
    if header.get('kind') != kind:
        raise ArtifactVersionError(f"{path} holds a {header.get('kind')!r} artifact, expected {kind!r}")
    if header.get('schema_version') != SCHEMA_VERSION:
        raise ArtifactVersionError(
            f"{path} has schema_version {header.get('schema_version')!r}, expected {SCHEMA_VERSION}"
        )


def save_artifact(path: Path, kind: str, payload: Any, config_hash: str) -> str:
    """Write one artifact atomically and return its sha256."""
    path = Path(path)
    if kind in JSONL_KINDS:
        lines = [_header(kind, config_hash)] + [item.to_dict() for item in payload]
        digest = JSONHandler.write_jsonl(path, lines)
    elif kind in DECODERS:
        data = payload.to_dict() if hasattr(payload, 'to_dict') else payload
        digest = JSONHandler.write_json(path, dict(_header(kind, config_hash), payload=data))
    else:
        raise ArtifactVersionError(f"Unknown artifact kind: {kind!r}")
    logger.debug("Wrote %s artifact %s (%s)", kind, path, digest[:12])
    return digest


def load_artifact_with_header(path: Path, kind: str) -> Tuple[Any, Dict[str, Any]]:
    path = Path(path)
    if kind in JSONL_KINDS:
        rows = JSONHandler.read_jsonl(path)
        if not rows:
            raise ArtifactVersionError(f"{path} has no artifact header")
        header, items = rows[0], rows[1:]
        _check_header(path, header, kind)
        return [AnswerSet.from_dict(item) for item in items], header

    if kind not in DECODERS:
        raise ArtifactVersionError(f"Unknown artifact kind: {kind!r}")
    data = JSONHandler.read_json(path)
    if not isinstance(data, dict):
        raise ArtifactVersionError(f"{path} is not an artifact file")
    header = {key: data.get(key) for key in ('kind', 'schema_version', 'config_hash')}
    _check_header(path, header, kind)
    if 'payload' not in data:
        raise SchemaError(f"{path} has no payload")
    return DECODERS[kind](data['payload']), header


def load_artifact(path: Path, kind: str) -> Any:
    return load_artifact_with_header(path, kind)[0]


def load_generations(path: Path) -> List[AnswerSet]:
    return load_artifact(path, 'generations')


def save_generations(path: Path, answer_sets: Sequence[AnswerSet], config_hash: str) -> str:
    return save_artifact(path, 'generations', answer_sets, config_hash)
