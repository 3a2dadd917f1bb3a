from typing import Optional, Tuple

import numpy as np

from src.utils.errors import DataError


class ProbeTrainingError(DataError):
    pass


class ConditioningError(ProbeTrainingError):
    pass


def _as_design(features: np.ndarray, targets: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64)
    if x.ndim != 2:
        raise ProbeTrainingError("Features must be an n x D matrix")
    if y.shape != (x.shape[0],):
        raise ProbeTrainingError(f"Need one target per row, got {y.size} targets for {x.shape[0]} rows")
    if x.shape[0] == 0:
        raise ProbeTrainingError("Cannot fit on zero examples")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ProbeTrainingError("Features and targets must be finite")
    return x, y


def ridge_fit(features: np.ndarray, targets: np.ndarray, ridge: float) -> Tuple[np.ndarray, float]:
    """Ridge regression with an unpenalized bias, solved on centered data."""
    if ridge < 0:
        raise ProbeTrainingError("Ridge strength cannot be negative")
    x, y = _as_design(features, targets)
    x_mean = x.mean(axis=0)
    y_mean = float(y.mean())
    xc = x - x_mean
    yc = y - y_mean

    gram = xc.T @ xc
    if ridge > 0:
        gram[np.diag_indices_from(gram)] += ridge
    elif np.linalg.matrix_rank(gram) < gram.shape[0]:
        raise ConditioningError(
            f"Normal equations are singular (n={x.shape[0]}, D={x.shape[1]}); use a ridge strength > 0"
        )
    try:
        weights = np.linalg.solve(gram, xc.T @ yc)
    except np.linalg.LinAlgError as e:
        raise ConditioningError(f"Failed to solve normal equations: {str(e)}") from e
    return weights, y_mean - float(x_mean @ weights)


def sigmoid(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    positive = z >= 0
    out[positive] = 1.0 / (1.0 + np.exp(-z[positive]))
    exp_z = np.exp(z[~positive])
    out[~positive] = exp_z / (1.0 + exp_z)
    return out


def logistic_fit(
    features: np.ndarray,
    labels: np.ndarray,
    ridge: float = 0.0,
    max_iter: int = 100,
    tol: float = 1e-8,
    start: Optional[np.ndarray] = None
) -> np.ndarray:
    """Iteratively reweighted least squares; returns weights with the bias last.

    The penalty is ridge * n on the weights (not the bias), so duplicating the
    training set leaves the solution unchanged.
    """
    x, y = _as_design(features, labels)
    if not np.all((y == 0) | (y == 1)):
        raise ProbeTrainingError("Logistic labels must be 0 or 1")
    n, dim = x.shape
    design = np.hstack([x, np.ones((n, 1))])
    penalty = np.full(dim + 1, ridge * n)
    penalty[-1] = 0.0

    beta = np.zeros(dim + 1) if start is None else np.asarray(start, dtype=np.float64).copy()
    for _ in range(max_iter):
        probs = sigmoid(design @ beta)
        curvature = np.clip(probs * (1.0 - probs), 1e-12, None)
        gradient = design.T @ (y - probs) - penalty * beta
        hessian = (design * curvature[:, None]).T @ design + np.diag(penalty)
        try:
            step = np.linalg.solve(hessian, gradient)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(hessian, gradient, rcond=None)[0]
        beta = beta + step
        if not np.all(np.isfinite(beta)):
            raise ConditioningError("Logistic fit diverged; increase the ridge strength")
        if np.max(np.abs(step)) < tol:
            break
    return beta
