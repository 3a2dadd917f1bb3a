import json

import pytest

from src.config.experiment import ExperimentConfig, load_experiment_config
from src.config.settings import JudgeConfig, settings
from src.utils.errors import ConfigurationError


def test_defaults_follow_settings():
    config = ExperimentConfig()
    assert config.d_model == settings.model.d_model
    assert config.n_samples == settings.sampling.n_samples
    assert config.sweep_grid == list(settings.steering.sweep_grid)
    assert config.policy == "topbottom"
    assert config.n_uncertain == config.n_certain == 100


def test_unknown_keys_are_rejected():
    with pytest.raises(ConfigurationError, match="n_sample"):
        ExperimentConfig.from_dict({'n_sample': 5})


@pytest.mark.parametrize("overrides", [
    {'n_samples': 1},
    {'policy': 'random'},
    {'vu_low': 0.9, 'vu_high': 0.5},
    {'max_alpha': -1.0},
    {'max_alpha': 'falcon'},
    {'window': [0, 9]},
    {'seed': -3},
    {'sweep_grid': []},
    {'holdout_fraction': 1.0},
])
def test_invalid_values_raise_configuration_errors(overrides):
    with pytest.raises(ConfigurationError):
        ExperimentConfig(**overrides)


def test_max_alpha_presets():
    assert ExperimentConfig(max_alpha='mistral').max_alpha == 0.4
    assert ExperimentConfig(max_alpha='qwen').max_alpha == 3.0
    assert ExperimentConfig(max_alpha=2).max_alpha == 2.0


def test_config_hash_ignores_out_dir():
    first = ExperimentConfig(out_dir="runs/a", seed=5)
    second = ExperimentConfig(out_dir="runs/b", seed=5)
    assert first.config_hash == second.config_hash
    assert ExperimentConfig(out_dir="runs/a", seed=6).config_hash != first.config_hash


def test_config_hash_ignores_the_judge_host_but_not_the_judge_model(tmp_path, monkeypatch):
    path = tmp_path / "config.json"
    path.write_text(json.dumps({'seed': 3}))
    monkeypatch.delenv("JUDGE_MODEL", raising=False)

    monkeypatch.setenv("JUDGE_API_URL", "http://host-a.invalid/v1")
    on_host_a = load_experiment_config(path)
    monkeypatch.setenv("JUDGE_API_URL", "http://host-b.invalid/v1")
    on_host_b = load_experiment_config(path)
    assert on_host_a.judge_base_url != on_host_b.judge_base_url
    assert on_host_a.config_hash == on_host_b.config_hash

    monkeypatch.setenv("JUDGE_MODEL", "other-judge")
    assert load_experiment_config(path).config_hash != on_host_b.config_hash


def test_window_is_sorted():
    assert ExperimentConfig(window=[5, 3]).window == [3, 5]


def test_load_layers_file_flags_and_environment(tmp_path, monkeypatch):
    path = tmp_path / "config.json"
    path.write_text(json.dumps({'seed': 3, 'n_questions': 12, 'judge_model': 'from-file'}))
    monkeypatch.setenv("JUDGE_MODEL", "from-env")
    monkeypatch.delenv("JUDGE_API_URL", raising=False)

    config = load_experiment_config(path, seed=9, out_dir=str(tmp_path / "out"))
    assert config.seed == 9
    assert config.n_questions == 12
    assert config.judge_model == "from-env"
    assert config.out_dir == str(tmp_path / "out")


def test_load_rejects_bad_files(tmp_path):
    with pytest.raises(ConfigurationError):
        load_experiment_config(tmp_path / "absent.json")
    path = tmp_path / "list.json"
    path.write_text("[1, 2]")
    with pytest.raises(ConfigurationError):
        load_experiment_config(path)


def test_check_paths_requires_existing_inputs(tmp_path):
    config = ExperimentConfig(dataset_path=str(tmp_path / "missing.jsonl"))
    with pytest.raises(ConfigurationError, match="dataset_path"):
        config.check_paths()
    ExperimentConfig().check_paths()


def test_judge_config_validation():
    with pytest.raises(ValueError):
        JudgeConfig(base_url="http://judge.invalid/v1", model_name="m", max_concurrent=0)
    with pytest.raises(ValueError):
        JudgeConfig(base_url="http://judge.invalid/v1", model_name="m", backoff_factor=0.5)


def test_settings_validate_finds_data_files():
    assert settings.validate()
