"""Analytic construction of a toy model with a known hedging direction.

The residual stream is split into a protected subspace, spanned by a fixed
orthonormal basis, and a free subspace that only ever receives seeded noise.
Logits read protected components only, so the planted direction's effect on
hedge tokens is exact and every noise block is harmless by construction.

Protected basis, in order:
    v*  hedging direction (the planted feature)
    m   marker carried by subject and mode tokens, read by attention keys
    b   constant query, supplied through the layer-norm bias
    o   "opener used": set on hedge and abstain tokens
    z   "answer done": set on entity and abstain tokens, read by EOS
    p   padding that equalizes the norm of marked tokens
    w_1..w_K  one direction per entity answer
"""
from typing import Iterable, List, Optional

import numpy as np

from src.config.settings import PlantedDefaults, settings
from src.models.tinylm.schema import (
    LayerWeights,
    ModelConfig,
    ModelWeights,
    PlantedFeature,
    SubjectFact,
)
from src.utils.errors import ConfigurationError
from src.utils.logger import get_logger
from .tokenizer import (
    BOS_ID,
    ENTITY_NAMES,
    EOS_ID,
    MODE_CERTAIN_ID,
    MODE_UNCERTAIN_ID,
    TokenLayout,
)

logger = get_logger(__name__)

V_STAR, MARKER, QUERY, OPENER, STOP, PAD = range(6)
N_FIXED = 6


def default_injection_layer(n_layers: int) -> int:
    return n_layers // 3


def build_planted_model(
    config: ModelConfig,
    hedge_tokens: Optional[Iterable[int]] = None,
    injection_layer: Optional[int] = None,
    planted: Optional[PlantedDefaults] = None
) -> ModelWeights:
    planted = planted or settings.planted
    layout = TokenLayout(config.vocab_size)
    d = config.d_model
    n_entities = len(ENTITY_NAMES)
    n_protected = N_FIXED + n_entities

    if not layout.is_complete():
        raise ConfigurationError(
            f"vocab_size {config.vocab_size} is too small for a planted model; "
            f"need at least {TokenLayout.required_vocab(1)}"
        )
    if d < n_protected + 2:
        raise ConfigurationError(f"d_model must be at least {n_protected + 2} for a planted model")
    if injection_layer is None:
        injection_layer = default_injection_layer(config.n_layers)
    if not 0 <= injection_layer < config.n_layers:
        raise ConfigurationError(f"injection_layer {injection_layer} is outside [0, {config.n_layers})")

    hedge_set = tuple(sorted(set(layout.phrase_ids if hedge_tokens is None else (int(t) for t in hedge_tokens))))
    if not hedge_set:
        raise ConfigurationError("hedge_tokens must not be empty")
    if min(hedge_set) < 0 or max(hedge_set) >= config.vocab_size:
        raise ConfigurationError("hedge_tokens must be inside the vocabulary")
    if set(hedge_set) & {BOS_ID, EOS_ID, MODE_UNCERTAIN_ID, MODE_CERTAIN_ID}:
        raise ConfigurationError("hedge_tokens cannot include control or mode tokens")

    worst_content = planted.knowledge_scale ** 2 + (3.0 * planted.hedge_spread) ** 2 + planted.mode_scale ** 2
    if worst_content >= planted.content_radius ** 2:
        raise ConfigurationError("content_radius is too small for the knowledge and mode scales")

    rng = np.random.default_rng(config.seed)

    raw = rng.standard_normal((d, n_protected))
    raw -= raw.mean(axis=0, keepdims=True)
    basis, _ = np.linalg.qr(raw)
    free = np.eye(d) - basis @ basis.T - np.full((d, d), 1.0 / d)

    v_star = basis[:, V_STAR]
    marker = basis[:, MARKER]
    query = basis[:, QUERY]
    opener = basis[:, OPENER]
    stop = basis[:, STOP]
    pad = basis[:, PAD]
    entity_dirs = basis[:, N_FIXED:]

    def free_noise(*shape: int, scale: float = planted.noise_scale) -> np.ndarray:
        return (rng.normal(0.0, scale, shape) @ free) if scale > 0 else np.zeros(shape)

    marked_norm = float(np.hypot(planted.marker_scale, planted.content_radius))

    def marked(content: np.ndarray) -> np.ndarray:
        pad_length = np.sqrt(max(planted.content_radius ** 2 - float(content @ content), 0.0))
        return planted.marker_scale * marker + content + pad_length * pad

    # embeddings
    token_embedding = (rng.standard_normal((config.vocab_size, d)) @ free) / np.sqrt(d)
    position_embedding = free_noise(config.context_len, d)

    token_embedding[MODE_UNCERTAIN_ID] = marked(planted.mode_scale * v_star)
    token_embedding[MODE_CERTAIN_ID] = marked(-planted.mode_scale * v_star)
    for token in layout.hedge_ids:
        token_embedding[token] += opener
    for token in layout.abstain_ids:
        token_embedding[token] += opener + stop
    for token in layout.entity_ids:
        token_embedding[token] += stop

    knowledge = _draw_knowledge(rng, layout, planted)
    entity_noise = rng.normal(0.0, planted.knowledge_noise, (len(knowledge), n_entities))
    for fact, noise in zip(knowledge, entity_noise):
        content = entity_dirs @ noise + fact.hedge_offset * v_star
        if fact.known:
            content = content + planted.knowledge_scale * entity_dirs[:, fact.gold_entity]
        token_embedding[fact.token_id] = marked(content)

    # blocks
    contents: List[np.ndarray] = [v_star] + [entity_dirs[:, i] for i in range(n_entities)]
    layers = [
        _broadcast_layer(config, query, marker, contents, marked_norm, planted, rng, free_noise)
        if index == injection_layer
        else _noise_layer(config, query, rng, free_noise)
        for index in range(config.n_layers)
    ]

    unembedding, unembedding_bias = _unembedding(
        config, layout, hedge_set, v_star, opener, stop, entity_dirs, planted
    )

    weights = ModelWeights(
        config=config,
        token_embedding=token_embedding.astype(np.float32),
        position_embedding=position_embedding.astype(np.float32),
        layers=layers,
        unembedding=unembedding.astype(np.float32),
        unembedding_bias=unembedding_bias.astype(np.float32),
        planted=PlantedFeature(
            direction=v_star.astype(np.float32),
            injection_layer=injection_layer,
            hedge_tokens=hedge_set,
            knowledge=knowledge
        )
    )
    logger.info(
        "Built planted model: d_model=%d layers=%d injection_layer=%d subjects=%d seed=%d",
        d, config.n_layers, injection_layer, len(knowledge), config.seed
    )
    return weights


def _draw_knowledge(rng: np.random.Generator, layout: TokenLayout, planted: PlantedDefaults) -> tuple:
    subjects = layout.subject_ids
    n_known = int(round(planted.known_fraction * len(subjects)))
    order = rng.permutation(len(subjects))
    known = np.zeros(len(subjects), dtype=bool)
    known[order[:n_known]] = True
    golds = rng.integers(0, len(ENTITY_NAMES), size=len(subjects))
    limit = 3.0 * planted.hedge_spread
    offsets = np.clip(rng.normal(0.0, planted.hedge_spread, len(subjects)), -limit, limit)
    return tuple(
        SubjectFact(
            token_id=token,
            known=bool(known[i]),
            gold_entity=int(golds[i]) if known[i] else None,
            hedge_offset=float(offsets[i])
        )
        for i, token in enumerate(subjects)
    )


def _layer(config: ModelConfig, query: np.ndarray, **tensors: np.ndarray) -> LayerWeights:
    d = config.d_model
    return LayerWeights(
        ln1_gain=np.ones(d, dtype=np.float32),
        ln1_bias=query.astype(np.float32),
        ln2_gain=np.ones(d, dtype=np.float32),
        ln2_bias=np.zeros(d, dtype=np.float32),
        **{name: value.astype(np.float32) for name, value in tensors.items()}
    )


def _mlp_tensors(config: ModelConfig, rng: np.random.Generator, free_noise) -> dict:
    d, hidden = config.d_model, 4 * config.d_model
    return {
        'w_in': rng.normal(0.0, 1.0 / np.sqrt(d), (d, hidden)),
        'b_in': rng.normal(0.0, 0.1, hidden),
        'w_out': free_noise(hidden, d),
        'b_out': free_noise(d),
    }


def _noise_layer(config: ModelConfig, query: np.ndarray, rng: np.random.Generator, free_noise) -> LayerWeights:
    d = config.d_model
    scale = 1.0 / np.sqrt(d)
    return _layer(
        config, query,
        w_q=rng.normal(0.0, scale, (d, d)),
        w_k=rng.normal(0.0, scale, (d, d)),
        w_v=rng.normal(0.0, scale, (d, d)),
        w_o=free_noise(d, d),
        **_mlp_tensors(config, rng, free_noise)
    )


def _broadcast_layer(
    config: ModelConfig,
    query: np.ndarray,
    marker: np.ndarray,
    contents: List[np.ndarray],
    marked_norm: float,
    planted: PlantedDefaults,
    rng: np.random.Generator,
    free_noise
) -> LayerWeights:
    """Every head attends to marked tokens and copies their content directions."""
    d, n_heads, head_dim = config.d_model, config.n_heads, config.head_dim
    key_scale = planted.attention_gap * marked_norm * np.sqrt(head_dim) / (planted.marker_scale * np.sqrt(d))

    w_q = np.zeros((d, d))
    w_k = np.zeros((d, d))
    w_v = np.zeros((d, d))
    w_o = np.zeros((d, d))
    for head in range(n_heads):
        w_q[:, head * head_dim] = query
        w_k[:, head * head_dim] = key_scale * marker
    for index, direction in enumerate(contents):
        column = (index % n_heads) * head_dim + index // n_heads
        w_v[:, column] = direction
        w_o[column, :] = (marked_norm / np.sqrt(d)) * direction

    return _layer(config, query, w_q=w_q, w_k=w_k, w_v=w_v, w_o=w_o, **_mlp_tensors(config, rng, free_noise))


def _unembedding(
    config: ModelConfig,
    layout: TokenLayout,
    hedge_set: tuple,
    v_star: np.ndarray,
    opener: np.ndarray,
    stop: np.ndarray,
    entity_dirs: np.ndarray,
    planted: PlantedDefaults
):
    rows = np.zeros((config.vocab_size, config.d_model))
    bias = np.full(config.vocab_size, planted.reserved_bias)
    bias[:BOS_ID] = planted.byte_bias

    rows[EOS_ID] = planted.stop_gain * stop
    bias[EOS_ID] = planted.eos_bias

    closed = -planted.opener_suppress * opener - planted.stop_suppress * stop
    for index, token in enumerate(layout.entity_ids):
        rows[token] = entity_dirs[:, index] + planted.opener_gain * opener - planted.stop_suppress * stop
        bias[token] = 0.0

    abstain = set(layout.abstain_ids)
    for token in hedge_set:
        if token in abstain:
            rows[token] = planted.abstain_gain * v_star + closed
            bias[token] = planted.abstain_bias
        else:
            rows[token] = planted.hedge_gain * v_star + closed
            bias[token] = planted.hedge_bias
    return rows, bias
