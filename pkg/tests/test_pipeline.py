import csv
import json

import numpy as np
import pytest

from src.services.artifacts.service import load_artifact, load_generations
from src.services.dataset.repository import ingest
from src.services.metrics.statistics import spearman
from src.services.pipeline.service import ExperimentPipeline
from src.utils.errors import StageError
from src.utils.file_handler.json_handler import JSONHandler


def artifact_files(root):
    return {
        path.relative_to(root).as_posix(): path.read_bytes()
        for path in sorted(root.rglob("*")) if path.is_file()
    }


def test_calibration_reduces_confident_hallucinations(pipeline_run):
    before, after = pipeline_run.before, pipeline_run.after
    assert after.confident_hallucination_rate < before.confident_hallucination_rate


def test_calibration_raises_vu_on_wrong_answers_only(pipeline_run):
    before, after = pipeline_run.before, pipeline_run.after
    assert after.vu_incorrect_mean > before.vu_incorrect_mean
    assert abs(after.vu_correct_mean - before.vu_correct_mean) < 0.15


def test_calibration_brings_su_and_vu_closer(pipeline_run):
    assert pipeline_run.after.pearson_su_vu > pipeline_run.before.pearson_su_vu


def test_reports_share_thresholds_and_record_counts(pipeline_run):
    before, after = pipeline_run.before, pipeline_run.after
    assert (before.tau_su, before.tau_vu) == (after.tau_su, after.tau_vu)
    assert before.n == after.n == 200
    assert sum(before.category_counts.values()) == before.n


def test_extracted_feature_aligns_with_planted_direction(pipeline_run):
    pipeline = pipeline_run.pipeline
    planted = pipeline.model.planted
    direction = load_artifact(pipeline.out_dir / "features.json", 'features')
    vector = direction.layers[planted.injection_layer].astype(np.float64)
    planted_vector = planted.direction.astype(np.float64)
    cosine = vector @ planted_vector / (np.linalg.norm(vector) * np.linalg.norm(planted_vector))
    assert cosine >= 0.9


def test_contrastive_activations_separate_in_two_dimensions(pipeline_run):
    pipeline = pipeline_run.pipeline
    projection = pipeline.projection()
    assert projection.layer == pipeline.model.planted.injection_layer
    assert projection.separability >= 0.9
    assert (pipeline.out_dir / "projection.json").exists()


def test_sweep_vu_rises_with_alpha(pipeline_run):
    with open(pipeline_run.pipeline.out_dir / "sweep.csv", newline="", encoding="utf-8") as file:
        rows = list(csv.DictReader(file))
    alphas = [float(row['alpha']) for row in rows]
    mean_vus = [float(row['mean_vu']) for row in rows]
    assert alphas == sorted(alphas)
    assert spearman(alphas, mean_vus) >= 0.9


def test_manifest_hashes_match_written_files(pipeline_run):
    pipeline = pipeline_run.pipeline
    manifest = load_artifact(pipeline.out_dir / "manifest.json", 'manifest')
    assert manifest['config_hash'] == pipeline.config_hash
    assert 'out_dir' not in manifest['config']

    expected = {
        'features.json', 'generations.jsonl', 'generations_after.jsonl', 'probes/vu.json', 'probes/su_norm.json',
        'detection.json', 'sweep.csv', 'report_before.json', 'report_after.json', 'report.csv'
    }
    assert expected <= set(manifest['artifacts'])
    for name, digest in manifest['artifacts'].items():
        assert JSONHandler.file_hash(pipeline.out_dir / name) == digest


def test_detection_reports_both_input_sources(pipeline_run):
    detection = load_artifact(pipeline_run.pipeline.out_dir / "detection.json", 'detection')
    assert set(detection['results']) == {'calculated', 'predicted'}
    assert detection['n_train'] + detection['n_test'] == 200
    calculated = detection['results']['calculated']
    if 'error' not in calculated:
        assert set(calculated) == {'su_only', 'vu_only', 'combined'}


def test_scored_generations_carry_prefill_states(pipeline_run):
    pipeline = pipeline_run.pipeline
    answer_sets = load_generations(pipeline.out_dir / "generations.jsonl")
    assert len(answer_sets) == 200
    first = answer_sets[0]
    assert first.clusters is not None and len(first.clusters) == pipeline.config.n_samples
    assert sorted(first.prefill_activations) == list(range(pipeline.model.config.n_layers))
    assert all(answer.vu is not None for answer in first.all_answers())


def test_runs_with_the_same_seed_are_byte_identical(tiny_config):
    first, second = tiny_config("first"), tiny_config("second")
    ExperimentPipeline(first).run_all()
    ExperimentPipeline(second).run_all()

    first_files = artifact_files(first.output_dir)
    second_files = artifact_files(second.output_dir)
    assert 'manifest.json' in first_files
    assert first_files.keys() == second_files.keys()
    for name, content in first_files.items():
        assert content == second_files[name], name


def test_stage_failures_name_the_stage(tiny_config):
    pipeline = ExperimentPipeline(tiny_config(n_questions=10_000))
    with pytest.raises(StageError) as info:
        pipeline.records
    assert info.value.stage == "load-dataset"
    assert info.value.exit_code == 2


def test_sampling_handles_questions_longer_than_the_prompt_budget(tiny_config, tmp_path):
    path = tmp_path / "long.jsonl"
    preamble = "Taking into account all the records kept by the old cartographers of the northern provinces, "
    rows = [
        {'id': f"long{index}", 'question': preamble + f"where is <|s{index:03d}|> located?", 'gold': ["Bakoru"]}
        for index in range(3)
    ]
    path.write_text("".join(json.dumps(row) + "\n" for row in rows), encoding="utf-8")
    records = ingest(path)
    assert all(len(record.question) > 100 for record in records)

    pipeline = ExperimentPipeline(tiny_config(dataset_path=str(path)))
    answer_sets = pipeline.sample()
    assert [answer_set.question_id for answer_set in answer_sets] == ["long0", "long1", "long2"]
    assert all(answer_set.n == pipeline.config.n_samples for answer_set in answer_sets)
    assert all(answer_set.most_likely.sample.activations for answer_set in answer_sets)
