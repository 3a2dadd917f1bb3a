from typing import Optional, Sequence

import numpy as np

from src.utils.errors import DataError


class UndefinedMetricError(DataError):
    pass


def average_ranks(values: Sequence[float]) -> np.ndarray:
    """1-based ranks; tied values share the average of their positions."""
    data = np.asarray(values, dtype=np.float64)
    order = np.argsort(data, kind="stable")
    ranks = np.empty(data.size, dtype=np.float64)
    sorted_values = data[order]
    start = 0
    while start < data.size:
        end = start
        while end + 1 < data.size and sorted_values[end + 1] == sorted_values[start]:
            end += 1
        ranks[order[start:end + 1]] = (start + end) / 2.0 + 1.0
        start = end + 1
    return ranks


def pearson(x: Sequence[float], y: Sequence[float]) -> float:
    a = np.asarray(x, dtype=np.float64)
    b = np.asarray(y, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise UndefinedMetricError("pearson needs two equal-length sequences")
    if a.size < 2:
        raise UndefinedMetricError("pearson needs at least 2 pairs")
    da = a - a.mean()
    db = b - b.mean()
    denominator = np.sqrt((da @ da) * (db @ db))
    if denominator == 0.0:
        raise UndefinedMetricError("pearson is undefined for constant input")
    return float(np.clip((da @ db) / denominator, -1.0, 1.0))


def spearman(x: Sequence[float], y: Sequence[float]) -> float:
    return pearson(average_ranks(x), average_ranks(y))


def auroc(scores: Sequence[float], labels: Sequence[bool]) -> float:
    """Mann-Whitney AUROC; ties between classes count one half."""
    values = np.asarray(scores, dtype=np.float64)
    positive = np.asarray(labels, dtype=bool)
    if values.shape != positive.shape:
        raise UndefinedMetricError("Need one label per score")
    n_pos = int(positive.sum())
    n_neg = int(positive.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUROC is undefined unless both classes are present")
    ranks = average_ranks(values)
    u_statistic = ranks[positive].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u_statistic / (n_pos * n_neg))


def mean_or_none(values: Sequence[float]) -> Optional[float]:
    return float(np.mean(values)) if len(values) else None
