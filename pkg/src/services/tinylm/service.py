from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from src.models.tinylm.schema import (
    GenerationSample,
    InterventionSpec,
    LayerWeights,
    ModelWeights,
    PositionPolicy,
    SamplingParams,
)
from src.utils.errors import DataError
from src.utils.file_handler.json_handler import JSONHandler
from src.utils.logger import get_logger
from .sampler import log_softmax, sample_token
from .tokenizer import EOS_ID, ByteTokenizer

logger = get_logger(__name__)

LN_EPS = np.float32(1e-5)
GELU_C = np.float32(np.sqrt(2.0 / np.pi))


class ModelInputError(DataError):
    pass


def layer_norm(x: np.ndarray, gain: np.ndarray, bias: np.ndarray) -> np.ndarray:
    mean = x.mean(axis=-1, keepdims=True)
    centered = x - mean
    var = (centered * centered).mean(axis=-1, keepdims=True)
    return centered / np.sqrt(var + LN_EPS) * gain + bias


def gelu(x: np.ndarray) -> np.ndarray:
    return np.float32(0.5) * x * (np.float32(1.0) + np.tanh(GELU_C * (x + np.float32(0.044715) * x * x * x)))


class TinyLM:
    """Decoder-only transformer over float32 numpy weights.

    Instances never mutate their weights; every generation owns its own rng.
    """

    def __init__(self, weights: ModelWeights):
        self.weights = weights
        self.config = weights.config
        self.tokenizer = ByteTokenizer(weights.config.vocab_size)
        self._causal_masks: Dict[int, np.ndarray] = {}

    @classmethod
    def load(cls, path: Path) -> 'TinyLM':
        data = JSONHandler.read_json(Path(path))
        return cls(ModelWeights.from_dict(data))

    def save(self, path: Path) -> str:
        digest = JSONHandler.write_json(Path(path), self.weights.to_dict(), indent=None)
        logger.info("Saved model weights to %s", path)
        return digest

    @property
    def planted(self):
        return self.weights.planted

    def prompt_budget(self, *params: SamplingParams) -> int:
        """Longest prompt that still leaves room for the largest max_new_tokens among params."""
        return self.config.context_len - max(p.max_new_tokens for p in params)

    def forward(
        self,
        tokens: Sequence[int],
        interventions: Sequence[InterventionSpec] = (),
        capture: Iterable[int] = ()
    ) -> Tuple[np.ndarray, Dict[int, np.ndarray]]:
        ids = self._check_tokens(tokens)
        by_layer = self._index_interventions(interventions)
        capture_set = self._check_layers(capture, "capture")

        weights = self.weights
        h = weights.token_embedding[ids] + weights.position_embedding[:ids.size]
        captured: Dict[int, np.ndarray] = {}

        for index, layer in enumerate(weights.layers):
            h = h + self._attention(layer, h)
            h = h + self._mlp(layer, h)
            for spec in by_layer.get(index, ()):
                h = self._apply(h, spec)
            if index in capture_set:
                captured[index] = h.copy()

        logits = h[-1] @ weights.unembedding.T + weights.unembedding_bias
        return logits.astype(np.float32), captured

    def capture_last_token_activations(self, prompt: Sequence[int]) -> Dict[int, np.ndarray]:
        if len(prompt) == 0:
            raise ModelInputError("Prompt must not be empty")
        _, captured = self.forward(prompt, capture=range(self.config.n_layers))
        return {layer: states[-1].copy() for layer, states in captured.items()}

    def generate(
        self,
        prompt: Sequence[int],
        params: SamplingParams,
        interventions: Sequence[InterventionSpec] = (),
        capture_prefill: bool = False
    ) -> GenerationSample:
        if len(prompt) == 0:
            raise ModelInputError("Prompt must not be empty")

        rng = np.random.default_rng(params.rng_seed)
        tokens: List[int] = [int(token) for token in prompt]
        generated: List[int] = []
        logprobs: List[float] = []
        activations: Optional[Dict[int, np.ndarray]] = None
        finished = False
        all_layers = range(self.config.n_layers) if capture_prefill else ()

        for step in range(params.max_new_tokens):
            if len(tokens) >= self.config.context_len and step > 0:
                break
            logits, captured = self.forward(tokens, interventions, all_layers if step == 0 else ())
            if step == 0 and capture_prefill:
                activations = {layer: states[-1].copy() for layer, states in captured.items()}

            token = sample_token(logits, params, rng)
            if token == EOS_ID:
                finished = True
                break
            logprob = float(log_softmax(logits)[token])
            generated.append(token)
            logprobs.append(min(logprob, 0.0))
            tokens.append(token)

        return GenerationSample(
            text=self.tokenizer.decode(generated),
            token_ids=generated,
            logprobs=logprobs,
            params=params,
            finished=finished,
            activations=activations
        )

    def _attention(self, layer: LayerWeights, h: np.ndarray) -> np.ndarray:
        n_tokens = h.shape[0]
        n_heads, head_dim = self.config.n_heads, self.config.head_dim
        x = layer_norm(h, layer.ln1_gain, layer.ln1_bias)

        q = (x @ layer.w_q).reshape(n_tokens, n_heads, head_dim).transpose(1, 0, 2)
        k = (x @ layer.w_k).reshape(n_tokens, n_heads, head_dim).transpose(1, 0, 2)
        v = (x @ layer.w_v).reshape(n_tokens, n_heads, head_dim).transpose(1, 0, 2)

        scores = (q @ k.transpose(0, 2, 1)) * np.float32(1.0 / np.sqrt(head_dim))
        scores = np.where(self._causal_mask(n_tokens), np.float32(-np.inf), scores)
        scores = scores - scores.max(axis=-1, keepdims=True)
        weights = np.exp(scores)
        weights = weights / weights.sum(axis=-1, keepdims=True)

        mixed = (weights @ v).transpose(1, 0, 2).reshape(n_tokens, self.config.d_model)
        return mixed @ layer.w_o

    def _mlp(self, layer: LayerWeights, h: np.ndarray) -> np.ndarray:
        x = layer_norm(h, layer.ln2_gain, layer.ln2_bias)
        return gelu(x @ layer.w_in + layer.b_in) @ layer.w_out + layer.b_out

    @staticmethod
    def _apply(h: np.ndarray, spec: InterventionSpec) -> np.ndarray:
        if spec.alpha == 0.0:
            return h
        delta = np.float32(spec.alpha) * spec.direction
        if spec.positions is PositionPolicy.ALL_TOKENS:
            return h + delta
        steered = h.copy()
        steered[-1] = steered[-1] + delta
        return steered

    def _causal_mask(self, n_tokens: int) -> np.ndarray:
        mask = self._causal_masks.get(n_tokens)
        if mask is None:
            mask = np.triu(np.ones((n_tokens, n_tokens), dtype=bool), k=1)
            self._causal_masks[n_tokens] = mask
        return mask

    def _check_tokens(self, tokens: Sequence[int]) -> np.ndarray:
        ids = np.asarray(tokens, dtype=np.int64)
        if ids.ndim != 1 or ids.size == 0:
            raise ModelInputError("Token sequence must be a non-empty 1-D sequence")
        if ids.size > self.config.context_len:
            raise ModelInputError(
                f"Sequence of {ids.size} tokens exceeds context_len {self.config.context_len}"
            )
        if ids.min() < 0 or ids.max() >= self.config.vocab_size:
            raise ModelInputError("Token id outside the vocabulary")
        return ids

    def _check_layers(self, layers: Iterable[int], field_name: str) -> set:
        selected = {int(layer) for layer in layers}
        for layer in selected:
            if not 0 <= layer < self.config.n_layers:
                raise ModelInputError(f"{field_name} layer {layer} is outside [0, {self.config.n_layers})")
        return selected

    def _index_interventions(self, interventions: Sequence[InterventionSpec]) -> Dict[int, List[InterventionSpec]]:
        by_layer: Dict[int, List[InterventionSpec]] = {}
        for spec in interventions:
            if spec.direction.shape != (self.config.d_model,):
                raise ModelInputError(
                    f"Intervention direction has length {spec.direction.shape[0]}, expected {self.config.d_model}"
                )
            for layer in self._check_layers(spec.layers, "intervention"):
                by_layer.setdefault(layer, []).append(spec)
        return by_layer
