from typing import Tuple

import numpy as np

from src.models.tinylm.schema import SamplingParams


def log_softmax(logits: np.ndarray) -> np.ndarray:
    values = np.asarray(logits, dtype=np.float64)
    shifted = values - values.max()
    return shifted - np.log(np.exp(shifted).sum())


def truncated_distribution(logits: np.ndarray, params: SamplingParams) -> Tuple[np.ndarray, np.ndarray]:
    """Candidate ids sorted by probability and their renormalized probabilities.

    Order is temperature, then top-k, then nucleus (top-p), then renormalize.
    """
    scaled = np.asarray(logits, dtype=np.float64) / params.temperature
    order = np.argsort(-scaled, kind="stable")
    kept = order[:min(params.top_k, order.size)]

    kept_logits = scaled[kept]
    probs = np.exp(kept_logits - kept_logits.max())
    probs /= probs.sum()

    cumulative = np.cumsum(probs)
    cutoff = int(np.searchsorted(cumulative, params.top_p, side="left")) + 1
    cutoff = min(cutoff, kept.size)

    nucleus = probs[:cutoff]
    return kept[:cutoff], nucleus / nucleus.sum()


def sample_token(logits: np.ndarray, params: SamplingParams, rng: np.random.Generator) -> int:
    ids, probs = truncated_distribution(logits, params)
    draw = rng.random()
    index = int(np.searchsorted(np.cumsum(probs), draw, side="right"))
    return int(ids[min(index, ids.size - 1)])
