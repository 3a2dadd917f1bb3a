import json

import pytest

from src.models.dataset.schema import QARecord
from src.services.dataset.repository import DatasetError, DatasetRepository, emit, ingest
from src.services.dataset.synthetic import make_dataset
from src.services.tinylm.tokenizer import ENTITY_NAMES
from src.utils.errors import ConfigurationError, SchemaError


def _write_lines(path, rows):
    path.write_text("".join(json.dumps(row) + "\n" for row in rows), encoding="utf-8")
    return path


def test_ingest_reads_records_in_file_order(tmp_path):
    path = _write_lines(tmp_path / "qa.jsonl", [
        {"id": "b", "question": "Where is Tenima?", "gold": ["north"]},
        {"id": "a", "question": "Where is Polesh?", "gold": ["south", "the south"]},
    ])
    records = ingest(path)
    assert [record.id for record in records] == ["b", "a"]
    assert records[1].gold == ["south", "the south"]


def test_schema_errors_name_the_line(tmp_path):
    path = _write_lines(tmp_path / "qa.jsonl", [
        {"id": "a", "question": "Where?", "gold": ["x"]},
        {"id": "b", "question": "Where?"},
    ])
    with pytest.raises(SchemaError, match=r"line 2: missing field \"gold\""):
        ingest(path)


def test_invalid_records_are_rejected():
    with pytest.raises(SchemaError):
        QARecord(id="a", question="Where?", gold=[])
    with pytest.raises(SchemaError):
        QARecord(id="a", question="  ", gold=["x"])
    with pytest.raises(SchemaError):
        QARecord(id="a", question="Where?", gold="x")


def test_duplicate_ids_are_rejected(tmp_path):
    path = _write_lines(tmp_path / "qa.jsonl", [
        {"id": "a", "question": "Where?", "gold": ["x"]},
        {"id": "a", "question": "Where else?", "gold": ["y"]},
    ])
    with pytest.raises(DatasetError, match="duplicate id 'a'"):
        ingest(path)


def test_missing_and_malformed_files(tmp_path):
    with pytest.raises(ConfigurationError):
        DatasetRepository(tmp_path / "absent.jsonl")
    broken = tmp_path / "broken.jsonl"
    broken.write_text('{"id": "a", "question": "Where?", "gold": ["x"]}\nnot json\n', encoding="utf-8")
    with pytest.raises(SchemaError, match="line 2"):
        ingest(broken)


def test_emit_then_ingest_keeps_records(tmp_path):
    records = [QARecord(id=f"q{i}", question=f"Where is {i}?", gold=[f"place {i}"]) for i in range(3)]
    path = tmp_path / "out" / "qa.jsonl"
    digest = emit(path, records)
    assert len(digest) == 64
    assert ingest(path) == records

    repository = DatasetRepository(path)
    assert repository.get_record_count() == 3
    assert repository.get_record_by_id("q1") == records[1]
    assert repository.get_record_by_id("q9") is None
    assert repository.golds_by_id()["q2"] == ["place 2"]


def test_make_dataset_uses_planted_knowledge(planted_model):
    records = make_dataset(planted_model, 30, seed=3)
    assert [record.id for record in records] == [f"q{i:04d}" for i in range(30)]
    assert records == make_dataset(planted_model, 30, seed=3)
    assert records != make_dataset(planted_model, 30, seed=4)

    facts = {planted_model.tokenizer.token_string(fact.token_id): fact for fact in planted_model.planted.knowledge}
    for record in records:
        subject = next(token for token in facts if token in record.question)
        fact = facts[subject]
        if fact.known:
            assert record.gold == [ENTITY_NAMES[fact.gold_entity]]
        else:
            assert record.gold[0] not in ENTITY_NAMES


def test_make_dataset_bounds(planted_model):
    with pytest.raises(ConfigurationError):
        make_dataset(planted_model, 0, seed=1)
    with pytest.raises(ConfigurationError):
        make_dataset(planted_model, len(planted_model.planted.knowledge) + 1, seed=1)
