from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.config.settings import settings
from src.models.feature.schema import (
    ActivationMap,
    ContrastivePolicy,
    ContrastiveSets,
    FeatureDirection,
    Projection2D,
    ThresholdPolicy,
    TopBottomPolicy,
)
from src.services.probes.linear import logistic_fit, sigmoid
from src.utils.errors import DataError
from src.utils.logger import get_logger

logger = get_logger(__name__)


class SelectionError(DataError):
    pass


class FeatureInputError(DataError):
    pass


class DegenerateDataError(DataError):
    pass


def build_contrastive_sets(
    scored: Sequence[Tuple[ActivationMap, float]],
    policy: ContrastivePolicy,
    source: Optional[str] = None
) -> ContrastiveSets:
    if not scored:
        raise SelectionError("No scored items to select from")
    scores = [float(vu) for _, vu in scored]

    if isinstance(policy, ThresholdPolicy):
        uncertain_idx = [i for i, vu in enumerate(scores) if vu >= policy.hi]
        certain_idx = [i for i, vu in enumerate(scores) if vu <= policy.lo]
    elif isinstance(policy, TopBottomPolicy):
        # sorted() is stable, so equal scores keep input order on both ends
        uncertain_idx = sorted(range(len(scores)), key=lambda i: -scores[i])[:policy.n_uncertain]
        certain_idx = sorted(range(len(scores)), key=lambda i: scores[i])[:policy.n_certain]
        overlap = set(uncertain_idx) & set(certain_idx)
        if overlap:
            logger.warning("%d items were selected for both contrastive sets", len(overlap))
    else:
        raise SelectionError(f"Unsupported contrastive policy: {policy!r}")

    if not uncertain_idx:
        raise SelectionError(f"D_uncertain is empty under policy {policy.to_dict()}")
    if not certain_idx:
        raise SelectionError(f"D_certain is empty under policy {policy.to_dict()}")

    metadata: Dict[str, Any] = {
        'policy': policy.to_dict(),
        'source': source,
        'n_scored': len(scored),
        'uncertain_mean_vu': float(np.mean([scores[i] for i in uncertain_idx])),
        'certain_mean_vu': float(np.mean([scores[i] for i in certain_idx])),
    }
    logger.info(
        "Selected %d uncertain and %d certain items from %d", len(uncertain_idx), len(certain_idx), len(scored)
    )
    try:
        return ContrastiveSets(
            uncertain=[scored[i][0] for i in uncertain_idx],
            certain=[scored[i][0] for i in certain_idx],
            metadata=metadata
        )
    except DataError as e:
        raise SelectionError(f"Failed to build contrastive sets: {str(e)}") from e


def extract_vuf(sets: ContrastiveSets) -> FeatureDirection:
    """Difference of mean activations, uncertain minus certain, per layer."""
    vectors = {}
    for layer in sets.layers:
        uncertain, certain = sets.stack(layer)
        vectors[layer] = uncertain.mean(axis=0) - certain.mean(axis=0)
    meta = {
        'source': sets.metadata.get('source'),
        'policy': sets.metadata.get('policy'),
        'normalized': False,
        'window': list(sets.layers),
        'n_uncertain': len(sets.uncertain),
        'n_certain': len(sets.certain),
    }
    return FeatureDirection(d_model=sets.d_model, layers=vectors, meta=meta)


def cosine_matrix(a: FeatureDirection, b: FeatureDirection) -> Dict[int, Optional[float]]:
    """Per-layer cosine similarity; None marks a zero vector on either side."""
    if a.d_model != b.d_model:
        raise FeatureInputError(f"d_model differs: {a.d_model} vs {b.d_model}")
    shared = sorted(set(a.layers) & set(b.layers))
    if not shared:
        raise FeatureInputError("Feature directions share no layers")

    result: Dict[int, Optional[float]] = {}
    for layer in shared:
        left = a.layers[layer].astype(np.float64)
        right = b.layers[layer].astype(np.float64)
        norms = np.linalg.norm(left) * np.linalg.norm(right)
        result[layer] = None if norms == 0.0 else float(np.clip(left @ right / norms, -1.0, 1.0))
    return result


def _power_iteration(matrix: np.ndarray, start: np.ndarray, max_iter: int, tol: float) -> Tuple[float, np.ndarray]:
    vector = start / np.linalg.norm(start)
    for _ in range(max_iter):
        product = matrix @ vector
        norm = np.linalg.norm(product)
        if norm == 0.0:
            return 0.0, vector
        updated = product / norm
        converged = np.linalg.norm(updated - vector) < tol
        vector = updated
        if converged:
            break
    return float(vector @ matrix @ vector), vector


def _orthogonal_start(rows: np.ndarray, basis: List[np.ndarray]) -> Optional[np.ndarray]:
    """Largest row after removing the given directions, or None when nothing remains."""
    residual = rows.copy()
    for direction in basis:
        residual -= np.outer(residual @ direction, direction)
    norms = np.linalg.norm(residual, axis=1)
    best = int(np.argmax(norms))
    return residual[best] if norms[best] > 1e-12 else None


def _fallback_direction(dim: int, basis: List[np.ndarray]) -> np.ndarray:
    for axis in range(dim):
        candidate = np.zeros(dim)
        candidate[axis] = 1.0
        for direction in basis:
            candidate -= (candidate @ direction) * direction
        if np.linalg.norm(candidate) > 1e-6:
            return candidate / np.linalg.norm(candidate)
    raise DegenerateDataError("Cannot find a second principal direction")


def principal_components(
    points: np.ndarray,
    n_components: int = 2,
    max_iter: Optional[int] = None,
    tol: Optional[float] = None
) -> Tuple[np.ndarray, np.ndarray, float]:
    """Top components of centered points by power iteration with deflation.

    Returns (components as rows, eigenvalues, total variance).
    """
    max_iter = max_iter or settings.probes.pca_max_iter
    tol = tol or settings.probes.pca_tol
    centered = points - points.mean(axis=0)
    covariance = centered.T @ centered / max(points.shape[0] - 1, 1)
    total = float(np.trace(covariance))
    if total <= 1e-12:
        raise DegenerateDataError("Activations have zero variance (rank-0 data)")

    components: List[np.ndarray] = []
    eigenvalues: List[float] = []
    deflated = covariance.copy()
    for _ in range(n_components):
        start = _orthogonal_start(centered, components)
        if start is None:
            eigenvalue, vector = 0.0, _fallback_direction(points.shape[1], components)
        else:
            eigenvalue, vector = _power_iteration(deflated, start, max_iter, tol)
        components.append(vector)
        eigenvalues.append(max(eigenvalue, 0.0))
        deflated = deflated - eigenvalue * np.outer(vector, vector)

    if eigenvalues[1] > eigenvalues[0]:
        components.reverse()
        eigenvalues.reverse()
    return np.stack(components), np.array(eigenvalues), total


def pca_separability(sets: ContrastiveSets, layer: int) -> Projection2D:
    if len(sets.uncertain) < 3 or len(sets.certain) < 3:
        raise SelectionError("PCA separability needs at least 3 points per class")
    uncertain, certain = sets.stack(layer)
    points = np.vstack([uncertain, certain])
    labels = ["uncertain"] * len(uncertain) + ["certain"] * len(certain)

    components, eigenvalues, total = principal_components(points)
    projected = (points - points.mean(axis=0)) @ components.T
    explained = tuple(float(np.clip(value / total, 0.0, 1.0)) for value in eigenvalues)

    target = np.array([1.0] * len(uncertain) + [0.0] * len(certain))
    scale = projected.std(axis=0)
    scale[scale == 0.0] = 1.0
    standardized = projected / scale
    beta = logistic_fit(
        standardized, target,
        ridge=settings.probes.ridge,
        max_iter=settings.probes.irls_max_iter,
        tol=settings.probes.irls_tol
    )
    predictions = sigmoid(standardized @ beta[:-1] + beta[-1]) >= 0.5
    accuracy = float(np.mean(predictions == (target == 1.0)))
    logger.info("PCA at layer %d: explained=%s separability=%.3f", layer, explained, accuracy)
    return Projection2D(
        points=projected,
        labels=labels,
        explained_variance=(explained[0], explained[1]),
        separability=accuracy,
        layer=layer
    )
