import json

import numpy as np
import pytest

from src.models.feature.schema import FeatureDirection
from src.models.probe.schema import Detector
from src.services.artifacts.service import (
    SCHEMA_VERSION,
    ArtifactVersionError,
    load_artifact,
    load_artifact_with_header,
    load_generations,
    save_artifact,
    save_generations,
)
from src.utils.file_handler.json_handler import JSONHandler


def test_features_survive_a_save_exactly(tmp_path):
    rng = np.random.default_rng(0)
    direction = FeatureDirection(d_model=8, layers={1: rng.normal(size=8), 4: rng.normal(size=8)}, meta={'window': [1, 4]})
    path = tmp_path / "features.json"
    digest = save_artifact(path, 'features', direction, "abc")

    loaded, header = load_artifact_with_header(path, 'features')
    assert header == {'kind': 'features', 'schema_version': SCHEMA_VERSION, 'config_hash': "abc"}
    assert digest == JSONHandler.file_hash(path)
    for layer in (1, 4):
        assert np.array_equal(loaded.layers[layer], direction.layers[layer])


def test_loading_the_wrong_kind_fails(tmp_path):
    path = tmp_path / "detector.json"
    save_artifact(path, 'detector', Detector(features=('su', 'vu'), weights=[1.0, -1.0, 0.0], threshold=0.5), "abc")
    assert load_artifact(path, 'detector').threshold == 0.5
    with pytest.raises(ArtifactVersionError, match="'detector' artifact, expected 'probe'"):
        load_artifact(path, 'probe')


def test_schema_version_mismatch_fails(tmp_path):
    path = tmp_path / "report.json"
    path.write_text(json.dumps({'kind': 'report', 'schema_version': SCHEMA_VERSION + 1, 'payload': {}}))
    with pytest.raises(ArtifactVersionError, match="schema_version"):
        load_artifact(path, 'report')


def test_unknown_kind_is_rejected(tmp_path):
    with pytest.raises(ArtifactVersionError):
        save_artifact(tmp_path / "x.json", 'weights', {}, "abc")


def test_generations_are_jsonl_with_a_header_line(tmp_path, make_answer_set):
    answer_sets = [
        make_answer_set("Tenima", ["Tenima", "maybe Polesh"], vus=[0.0, 0.1, 0.7], abstained=[False] * 3,
                        question_id="q0000", clusters=[0, 1]),
        make_answer_set("I don't know", ["I don't know", "Bakoru"], question_id="q0001"),
    ]
    path = tmp_path / "generations.jsonl"
    save_generations(path, answer_sets, "abc")

    lines = path.read_text(encoding="utf-8").splitlines()
    assert len(lines) == 3
    assert json.loads(lines[0]) == {'kind': 'generations', 'schema_version': SCHEMA_VERSION, 'config_hash': "abc"}

    loaded = load_generations(path)
    assert [answer_set.question_id for answer_set in loaded] == ["q0000", "q0001"]
    assert loaded[0].clusters == [0, 1]
    assert loaded[0].sample_vus == [0.1, 0.7]
    assert loaded[1].most_likely.abstained is None


def test_generations_without_header_fail(tmp_path):
    path = tmp_path / "generations.jsonl"
    path.write_text(json.dumps({'kind': 'features', 'schema_version': SCHEMA_VERSION}) + "\n")
    with pytest.raises(ArtifactVersionError):
        load_generations(path)
