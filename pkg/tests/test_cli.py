import json

import numpy as np
import pytest

from src.main import main
from src.models.feature.schema import FeatureDirection
from src.services.artifacts.service import load_artifact, save_artifact

SMALL_CONFIG = {
    'seed': 5,
    'n_questions': 6,
    'n_samples': 3,
    'contrastive_questions': 4,
    'n_uncertain': 3,
    'n_certain': 3,
    'sweep_questions': 2,
    'sweep_grid': [0.0, 1.0],
}


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(SMALL_CONFIG), encoding="utf-8")
    return path


def _summary(capsys) -> str:
    return capsys.readouterr().out.strip().splitlines()[-1]


def test_missing_config_exits_with_configuration_code(tmp_path, capsys):
    assert main(["--config", str(tmp_path / "absent.json"), "--out", str(tmp_path / "out"), "sample"]) == 2
    assert capsys.readouterr().out == ""


def test_ingest_check_reports_schema_errors(tmp_path, capsys):
    good = tmp_path / "good.jsonl"
    good.write_text('{"id": "a", "question": "Where?", "gold": ["x"]}\n', encoding="utf-8")
    assert main(["--out", str(tmp_path / "out"), "ingest-check", str(good)]) == 0
    assert _summary(capsys).startswith("hedgescope ingest-check: dataset=")

    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"id": "a", "question": "Where?"}\n', encoding="utf-8")
    assert main(["--out", str(tmp_path / "out"), "ingest-check", str(bad)]) == 3
    assert "line 1" in capsys.readouterr().err


def test_score_without_generations_is_a_configuration_error(tmp_path, config_file):
    assert main(["--config", str(config_file), "--out", str(tmp_path / "empty"), "score"]) == 2


def test_sample_then_score(tmp_path, config_file, capsys):
    out = tmp_path / "run"
    assert main(["--config", str(config_file), "--out", str(out), "sample"]) == 0
    assert _summary(capsys) == "hedgescope sample: questions=6 samples=3"

    assert main(["--config", str(config_file), "--out", str(out), "score"]) == 0
    assert _summary(capsys).startswith("hedgescope score: questions=6 mean_su_norm=")
    assert (out / "generations.jsonl").exists()


def test_build_model_and_make_dataset(tmp_path, config_file, capsys):
    out = tmp_path / "run"
    assert main(["--config", str(config_file), "--out", str(out), "build-model"]) == 0
    assert "vocab_size=532" in _summary(capsys)
    assert main(["--config", str(config_file), "--out", str(out), "make-dataset"]) == 0
    assert _summary(capsys).endswith("records=6")
    assert len((out / "dataset.jsonl").read_text(encoding="utf-8").splitlines()) == 6


def test_cosine_compares_feature_files(tmp_path, capsys):
    vector = np.array([0.5, -1.0, 2.0])
    direction = FeatureDirection(d_model=3, layers={2: vector, 3: -vector})
    first, second = tmp_path / "a.json", tmp_path / "b.json"
    save_artifact(first, 'features', direction, "x")
    save_artifact(second, 'features', direction, "y")

    out = tmp_path / "out"
    assert main(["--out", str(out), "cosine", str(first), str(second)]) == 0
    assert _summary(capsys) == "hedgescope cosine: layers=2 mean_cosine=1.0000"
    assert load_artifact(out / "cosine.json", 'cosine') == {"2": pytest.approx(1.0), "3": pytest.approx(1.0)}


def test_seed_flag_overrides_the_config(tmp_path, config_file, capsys):
    first, second = tmp_path / "a", tmp_path / "b"
    assert main(["--config", str(config_file), "--seed", "5", "--out", str(first), "make-dataset"]) == 0
    assert main(["--config", str(config_file), "--seed", "6", "--out", str(second), "make-dataset"]) == 0
    assert (first / "dataset.jsonl").read_bytes() != (second / "dataset.jsonl").read_bytes()
