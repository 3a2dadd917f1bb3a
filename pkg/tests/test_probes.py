import numpy as np
import pytest

from src.models.probe.schema import Detector, ProbeKind, ProbeTarget
from src.services.metrics.statistics import auroc
from src.services.probes.linear import ConditioningError, ProbeTrainingError, logistic_fit, ridge_fit, sigmoid
from src.services.probes.service import (
    ProbeInputError,
    accuracy,
    detector_decisions,
    detector_scores,
    evaluate_detectors,
    label_examples,
    predict,
    predict_many,
    stack_features,
    train_classifier,
    train_detector,
    train_regressor,
)
from src.utils.errors import SchemaError


def _synthetic_detection(n: int, seed: int):
    """Hallucination when SU is high and VU is low, with 5% label noise."""
    rng = np.random.default_rng(seed)
    su, vu = rng.random(n), rng.random(n)
    labels = (su > 0.7) & (vu < 0.3)
    flip = rng.random(n) < 0.05
    labels = np.where(flip, ~labels, labels)
    return np.column_stack([su, vu]), labels


def test_ridge_recovers_planted_weights():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(500, 64))
    weights = rng.normal(size=64)
    y = x @ weights + 0.25

    fitted, bias = ridge_fit(x, y, ridge=1e-9)
    assert np.max(np.abs(fitted - weights)) < 1e-4
    assert bias == pytest.approx(0.25, abs=1e-4)


def test_ridge_rejects_singular_problems_without_penalty():
    x = np.ones((4, 3))
    with pytest.raises(ConditioningError):
        ridge_fit(x, np.arange(4.0), ridge=0.0)
    with pytest.raises(ProbeTrainingError):
        ridge_fit(x, np.arange(3.0), ridge=1.0)


def test_sigmoid_is_stable_at_the_extremes():
    values = sigmoid(np.array([-1000.0, 0.0, 1000.0]))
    assert values.tolist() == [0.0, 0.5, 1.0]


def test_logistic_fit_separates_a_linear_boundary():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(200, 2))
    y = (x[:, 0] + x[:, 1] > 0).astype(float)
    beta = logistic_fit(x, y, ridge=1e-3)
    predictions = sigmoid(x @ beta[:-1] + beta[-1]) >= 0.5
    assert np.mean(predictions == y.astype(bool)) >= 0.95

    with pytest.raises(ProbeTrainingError):
        logistic_fit(x, np.full(200, 0.5))


def test_logistic_penalty_scales_with_sample_size():
    rng = np.random.default_rng(2)
    x = rng.normal(size=(50, 3))
    y = (rng.random(50) < 0.5).astype(float)
    once = logistic_fit(x, y, ridge=0.1)
    twice = logistic_fit(np.vstack([x, x]), np.concatenate([y, y]), ridge=0.1)
    assert np.allclose(once, twice, atol=1e-6)


def test_regressor_probe_predictions_follow_the_target_range():
    rng = np.random.default_rng(3)
    hidden = rng.normal(size=(100, 8))
    targets = np.clip(hidden[:, 0] * 0.5 + 0.5, 0.0, 1.0)

    probe = train_regressor(hidden, targets, ridge=1e-3, layers=(2, 3))
    assert probe.kind is ProbeKind.REGRESSOR
    assert probe.layers == (2, 3) and probe.d_model == 4
    predictions = predict_many(probe, hidden * 10.0)
    assert np.all((predictions >= 0.0) & (predictions <= 1.0))
    assert predict(probe, hidden[0]) == pytest.approx(float(predict_many(probe, hidden[:1])[0]))

    with pytest.raises(ProbeInputError):
        predict_many(probe, hidden[:, :4])
    with pytest.raises(ProbeTrainingError):
        train_regressor(hidden[:, :7], targets, layers=(2, 3))


def test_unbounded_su_probe_is_only_floored():
    rng = np.random.default_rng(4)
    hidden = rng.normal(size=(80, 4))
    targets = np.abs(hidden[:, 0]) * 3.0
    probe = train_regressor(hidden, targets, target=ProbeTarget.SU)
    assert np.all(predict_many(probe, hidden) >= 0.0)
    assert predict_many(probe, hidden).max() > 1.0


def test_classifier_probe_needs_both_classes():
    rng = np.random.default_rng(5)
    hidden = rng.normal(size=(60, 4))
    labels = hidden[:, 1] > 0
    probe = train_classifier(hidden, labels, threshold=0.5)
    assert probe.kind is ProbeKind.CLASSIFIER
    assert probe.meta['binarization_threshold'] == 0.5
    probabilities = predict_many(probe, hidden)
    assert np.mean((probabilities >= 0.5) == labels) >= 0.9

    with pytest.raises(ProbeTrainingError):
        train_classifier(hidden, np.zeros(60, dtype=bool))


def test_stack_features_follows_window_order():
    activations = {0: np.array([1.0, 2.0]), 1: np.array([3.0, 4.0])}
    assert stack_features(activations, (1, 0)).tolist() == [3.0, 4.0, 1.0, 2.0]
    with pytest.raises(ProbeInputError):
        stack_features(activations, (2,))


def test_combined_detector_beats_single_feature_detectors():
    train_x, train_y = _synthetic_detection(1000, seed=10)
    test_x, test_y = _synthetic_detection(1000, seed=11)
    results = evaluate_detectors(train_x, train_y, test_x, test_y, input_source="calculated")

    combined = results['combined']['auroc']
    assert combined > results['su_only']['auroc']
    assert combined > results['vu_only']['auroc']
    assert results['combined']['accuracy'] >= 0.85


def test_detector_threshold_and_decisions():
    features, labels = _synthetic_detection(400, seed=12)
    detector = train_detector(features, labels)
    scores = detector_scores(detector, features)
    assert np.array_equal(detector_decisions(detector, features), scores >= detector.threshold)
    assert accuracy(detector_decisions(detector, features), labels) >= 0.85
    assert auroc(scores, labels) > 0.5

    with pytest.raises(ProbeTrainingError):
        train_detector(features, np.zeros(400, dtype=bool))
    with pytest.raises(ProbeInputError):
        detector_scores(detector, features[:, :1])
    with pytest.raises(ProbeInputError):
        accuracy([], [])


def test_detector_schema_checks():
    with pytest.raises(SchemaError):
        Detector(features=('entropy',), weights=[0.0, 0.0], threshold=0.5)
    with pytest.raises(SchemaError):
        Detector(features=('su', 'vu'), weights=[0.0, 0.0], threshold=0.5)
    with pytest.raises(SchemaError):
        Detector(features=('su',), weights=[0.0, 0.0], threshold=0.5, input_source="guessed")


def test_label_examples_marks_complying_wrong_answers(make_answer_set):
    answer_sets = [
        make_answer_set("Tenima", ["Tenima"], abstained=[False, False], question_id="q0"),
        make_answer_set("Polesh", ["Polesh"], abstained=[False, False], question_id="q1"),
        make_answer_set("I don't know", ["I don't know"], abstained=[True, True], question_id="q2"),
    ]
    examples = label_examples(answer_sets, lambda answer_set: answer_set.most_likely.text == "Tenima")
    assert [example.hallucinated for example in examples] == [False, True, False]
    assert [example.abstained for example in examples] == [False, False, True]

    with pytest.raises(ProbeInputError):
        label_examples([make_answer_set("Tenima", ["Tenima"])], lambda answer_set: True)
