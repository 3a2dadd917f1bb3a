from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence

import numpy as np

from src.config.settings import settings
from src.models.answers.schema import AnswerSet
from src.models.probe.schema import DETECTOR_FEATURES, Detector, LabeledExample, Probe, ProbeKind, ProbeTarget
from src.services.metrics.statistics import auroc
from src.utils.errors import DataError
from src.utils.logger import get_logger
from .linear import ProbeTrainingError, logistic_fit, ridge_fit, sigmoid

logger = get_logger(__name__)


class ProbeInputError(DataError):
    pass


def stack_features(activations: Mapping[int, np.ndarray], layers: Sequence[int]) -> np.ndarray:
    """Concatenate per-layer vectors over the window, in window order."""
    try:
        return np.concatenate([np.asarray(activations[layer], dtype=np.float64) for layer in layers])
    except KeyError as e:
        raise ProbeInputError(f"Layer {e} was not captured") from e


def _window(hidden: np.ndarray, layers: Optional[Sequence[int]]) -> tuple:
    layers = tuple(layers) if layers is not None else (0,)
    if hidden.ndim != 2 or hidden.shape[1] % len(layers) != 0:
        raise ProbeTrainingError("Hidden-state width must be d_model times the window size")
    return layers, hidden.shape[1] // len(layers)


def train_regressor(
    hidden: np.ndarray,
    targets: Sequence[float],
    ridge: Optional[float] = None,
    target: ProbeTarget = ProbeTarget.VU,
    layers: Optional[Sequence[int]] = None
) -> Probe:
    ridge = settings.probes.ridge if ridge is None else ridge
    hidden = np.asarray(hidden, dtype=np.float64)
    layers, d_model = _window(hidden, layers)
    weights, bias = ridge_fit(hidden, np.asarray(targets, dtype=np.float64), ridge)
    logger.info("Trained %s regressor on %d examples (D=%d, ridge=%g)", target.value, hidden.shape[0], hidden.shape[1], ridge)
    return Probe(
        target=target,
        kind=ProbeKind.REGRESSOR,
        layers=layers,
        d_model=d_model,
        weights=np.append(weights, bias),
        ridge=ridge
    )


def train_classifier(
    hidden: np.ndarray,
    labels: Sequence[bool],
    ridge: Optional[float] = None,
    target: ProbeTarget = ProbeTarget.VU,
    layers: Optional[Sequence[int]] = None,
    threshold: Optional[float] = None
) -> Probe:
    """Penalized logistic probe on binarized targets."""
    ridge = settings.probes.ridge if ridge is None else ridge
    hidden = np.asarray(hidden, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if y.size and (y.min() == y.max()):
        raise ProbeTrainingError("Classifier probe needs both classes present")
    layers, d_model = _window(hidden, layers)
    beta = logistic_fit(
        hidden, y, ridge=ridge,
        max_iter=settings.probes.irls_max_iter,
        tol=settings.probes.irls_tol
    )
    meta: Dict[str, Any] = {'binarization_threshold': threshold} if threshold is not None else {}
    return Probe(
        target=target,
        kind=ProbeKind.CLASSIFIER,
        layers=layers,
        d_model=d_model,
        weights=beta,
        ridge=ridge,
        meta=meta
    )


def predict_many(probe: Probe, hidden: np.ndarray) -> np.ndarray:
    matrix = np.atleast_2d(np.asarray(hidden, dtype=np.float64))
    expected = probe.d_model * len(probe.layers)
    if matrix.shape[1] != expected:
        raise ProbeInputError(f"Probe expects {expected} features, got {matrix.shape[1]}")
    weights = probe.weights.astype(np.float64)
    values = matrix @ weights[:-1] + weights[-1]
    if probe.kind is ProbeKind.CLASSIFIER:
        return sigmoid(values)
    if probe.target.bounded:
        return np.clip(values, 0.0, 1.0)
    return np.maximum(values, 0.0) if probe.target is ProbeTarget.SU else values


def predict(probe: Probe, hidden: Sequence[float]) -> float:
    vector = np.asarray(hidden, dtype=np.float64)
    if vector.ndim != 1:
        raise ProbeInputError("predict takes a single hidden-state vector")
    return float(predict_many(probe, vector[None, :])[0])


def _best_threshold(probs: np.ndarray, labels: np.ndarray) -> float:
    """Midpoint cut between sorted distinct probabilities that maximizes accuracy."""
    distinct = np.unique(probs)
    candidates = np.concatenate([[distinct[0] - 1.0], (distinct[:-1] + distinct[1:]) / 2.0, [distinct[-1] + 1.0]])
    best, best_accuracy = float(candidates[0]), -1.0
    for candidate in candidates:
        accuracy = float(np.mean((probs >= candidate) == labels))
        if accuracy > best_accuracy:
            best, best_accuracy = float(candidate), accuracy
    return best


def train_detector(
    features: np.ndarray,
    labels: Sequence[bool],
    feature_names: Sequence[str] = DETECTOR_FEATURES,
    ridge: Optional[float] = None,
    input_source: str = "calculated"
) -> Detector:
    ridge = settings.probes.ridge if ridge is None else ridge
    x = np.asarray(features, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    y = np.asarray(labels, dtype=bool)
    if x.shape != (y.size, len(feature_names)):
        raise ProbeTrainingError(f"Detector features must be an n x {len(feature_names)} matrix")
    if y.all() or not y.any():
        raise ProbeTrainingError("Detector training needs both hallucinated and clean examples")

    beta = logistic_fit(
        x, y.astype(np.float64), ridge=ridge,
        max_iter=settings.probes.irls_max_iter,
        tol=settings.probes.irls_tol
    )
    weights = beta.astype(np.float32)
    probs = sigmoid(x @ weights[:-1].astype(np.float64) + float(weights[-1]))
    detector = Detector(
        features=tuple(feature_names),
        weights=weights,
        threshold=_best_threshold(probs, y),
        input_source=input_source
    )
    logger.info("Trained detector on %s (%s inputs, n=%d)", detector.features, input_source, y.size)
    return detector


def detector_scores(detector: Detector, features: np.ndarray) -> np.ndarray:
    x = np.asarray(features, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[1] != len(detector.features):
        raise ProbeInputError(f"Detector expects {len(detector.features)} features, got {x.shape[1]}")
    weights = detector.weights.astype(np.float64)
    return sigmoid(x @ weights[:-1] + weights[-1])


def detector_decisions(detector: Detector, features: np.ndarray) -> np.ndarray:
    return detector_scores(detector, features) >= detector.threshold


def accuracy(decisions: Sequence[bool], labels: Sequence[bool]) -> float:
    decisions = np.asarray(decisions, dtype=bool)
    labels = np.asarray(labels, dtype=bool)
    if decisions.shape != labels.shape or decisions.size == 0:
        raise ProbeInputError("accuracy needs equal-length, non-empty inputs")
    return float(np.mean(decisions == labels))


def label_examples(
    answer_sets: Sequence[AnswerSet],
    is_correct: Callable[[AnswerSet], bool],
    features: Optional[Mapping[str, Sequence[float]]] = None
) -> List[LabeledExample]:
    """Hallucinated iff the most-likely answer complies and is incorrect."""
    examples = []
    for answer_set in answer_sets:
        abstained = answer_set.most_likely.abstained
        if abstained is None:
            raise ProbeInputError(f"Question {answer_set.question_id} is not scored for abstention")
        correct = bool(is_correct(answer_set))
        examples.append(LabeledExample(
            question_id=answer_set.question_id,
            features=np.asarray(features[answer_set.question_id] if features else [], dtype=np.float64),
            hallucinated=(not abstained) and not correct,
            abstained=abstained,
            correct=correct
        ))
    return examples


def evaluate_detectors(
    train_features: np.ndarray,
    train_labels: Sequence[bool],
    test_features: np.ndarray,
    test_labels: Sequence[bool],
    input_source: str
) -> Dict[str, Dict[str, Any]]:
    """su-only, vu-only and combined detectors, scored by AUROC and accuracy on the test split."""
    results: Dict[str, Dict[str, Any]] = {}
    variants = {'su_only': (0,), 'vu_only': (1,), 'combined': (0, 1)}
    for name, columns in variants.items():
        detector = train_detector(
            np.asarray(train_features)[:, columns], train_labels,
            feature_names=tuple(DETECTOR_FEATURES[c] for c in columns),
            input_source=input_source
        )
        test_x = np.asarray(test_features)[:, columns]
        scores = detector_scores(detector, test_x)
        results[name] = {
            'auroc': auroc(scores, test_labels),
            'accuracy': accuracy(scores >= detector.threshold, test_labels),
            'detector': detector.to_dict()
        }
    return results
