from dataclasses import dataclass, replace
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from src.utils.errors import ConfigurationError, SchemaError
from src.utils.file_handler.array_codec import (
    decode_array,
    encode_array,
    list_to_vector,
    vector_to_list,
)

WEIGHTS_FORMAT = "hedgescope-tinylm"
WEIGHTS_VERSION = 1
BYTE_VOCAB = 256
MIN_VOCAB = BYTE_VOCAB + 2


class PositionPolicy(Enum):
    ALL_TOKENS = "all_tokens"
    LAST_TOKEN = "last_token"


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    d_model: int = 64
    n_layers: int = 6
    n_heads: int = 4
    context_len: int = 128
    seed: int = 7

    def __post_init__(self):
        for name in ("vocab_size", "d_model", "n_layers", "n_heads", "context_len"):
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool) or value < 1:
                raise ConfigurationError(f"{name} must be a positive integer")
        if self.vocab_size < MIN_VOCAB:
            raise ConfigurationError(f"vocab_size must be at least {MIN_VOCAB} (256 bytes plus BOS/EOS)")
        if self.d_model % self.n_heads != 0:
            raise ConfigurationError("d_model must be divisible by n_heads")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigurationError("seed must be a 64-bit unsigned integer")

    @property
    def head_dim(self) -> int:
        return self.d_model // self.n_heads

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'ModelConfig':
        try:
            return cls(
                vocab_size=int(data['vocab_size']),
                d_model=int(data['d_model']),
                n_layers=int(data['n_layers']),
                n_heads=int(data['n_heads']),
                context_len=int(data['context_len']),
                seed=int(data['seed'])
            )
        except KeyError as e:
            raise SchemaError(f"Model config is missing field {e}") from e

    def to_dict(self) -> Dict[str, Any]:
        return {
            'vocab_size': self.vocab_size,
            'd_model': self.d_model,
            'n_layers': self.n_layers,
            'n_heads': self.n_heads,
            'context_len': self.context_len,
            'seed': self.seed
        }


@dataclass(frozen=True)
class SamplingParams:
    temperature: float = 1.0
    top_p: float = 0.9
    top_k: int = 50
    max_new_tokens: int = 8
    rng_seed: int = 0

    def __post_init__(self):
        if not self.temperature > 0:
            raise SchemaError("temperature must be greater than 0")
        if not 0.0 < self.top_p <= 1.0:
            raise SchemaError("top_p must be in (0.0, 1.0]")
        if self.top_k < 1:
            raise SchemaError("top_k must be at least 1")
        if self.max_new_tokens < 1:
            raise SchemaError("max_new_tokens must be at least 1")
        if not 0 <= self.rng_seed < 2 ** 64:
            raise SchemaError("rng_seed must be a 64-bit unsigned integer")

    def with_seed(self, rng_seed: int) -> 'SamplingParams':
        return replace(self, rng_seed=int(rng_seed))

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'SamplingParams':
        return cls(
            temperature=float(data['temperature']),
            top_p=float(data['top_p']),
            top_k=int(data['top_k']),
            max_new_tokens=int(data['max_new_tokens']),
            rng_seed=int(data['rng_seed'])
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            'temperature': self.temperature,
            'top_p': self.top_p,
            'top_k': self.top_k,
            'max_new_tokens': self.max_new_tokens,
            'rng_seed': self.rng_seed
        }


@dataclass(frozen=True, eq=False)
class InterventionSpec:
    layers: Tuple[int, ...]
    direction: np.ndarray
    alpha: float
    positions: PositionPolicy = PositionPolicy.ALL_TOKENS

    def __post_init__(self):
        object.__setattr__(self, 'layers', tuple(int(layer) for layer in self.layers))
        object.__setattr__(self, 'direction', np.asarray(self.direction, dtype=np.float32))
        if not self.layers:
            raise SchemaError("Intervention needs at least one layer")
        if self.direction.ndim != 1:
            raise SchemaError("Intervention direction must be a vector")
        if not np.isfinite(self.alpha) or not np.all(np.isfinite(self.direction)):
            raise SchemaError("Intervention alpha and direction must be finite")


@dataclass
class GenerationSample:
    text: str
    token_ids: List[int]
    logprobs: List[float]
    params: SamplingParams
    finished: bool = True
    activations: Optional[Dict[int, np.ndarray]] = None

    def __post_init__(self):
        if len(self.token_ids) > self.params.max_new_tokens:
            raise SchemaError("Generated more tokens than max_new_tokens")
        if len(self.logprobs) != len(self.token_ids):
            raise SchemaError("Need one log-probability per generated token")
        if any(value > 0 for value in self.logprobs):
            raise SchemaError("Log-probabilities cannot be positive")

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'GenerationSample':
        activations = data.get('activations')
        return cls(
            text=data['text'],
            token_ids=[int(token) for token in data['token_ids']],
            logprobs=[float(value) for value in data['logprobs']],
            params=SamplingParams.from_dict(data['params']),
            finished=bool(data.get('finished', True)),
            activations=(
                {int(layer): list_to_vector(vector) for layer, vector in activations.items()}
                if activations is not None else None
            )
        )

    def to_dict(self) -> Dict[str, Any]:
        data = {
            'text': self.text,
            'token_ids': list(self.token_ids),
            'logprobs': list(self.logprobs),
            'params': self.params.to_dict(),
            'finished': self.finished
        }
        if self.activations is not None:
            data['activations'] = {
                str(layer): vector_to_list(vector) for layer, vector in sorted(self.activations.items())
            }
        return data


@dataclass(frozen=True)
class SubjectFact:
    token_id: int
    known: bool
    gold_entity: Optional[int]
    hedge_offset: float

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'SubjectFact':
        gold = data.get('gold_entity')
        return cls(
            token_id=int(data['token_id']),
            known=bool(data['known']),
            gold_entity=int(gold) if gold is not None else None,
            hedge_offset=float(data['hedge_offset'])
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            'token_id': self.token_id,
            'known': self.known,
            'gold_entity': self.gold_entity,
            'hedge_offset': self.hedge_offset
        }


@dataclass
class PlantedFeature:
    direction: np.ndarray
    injection_layer: int
    hedge_tokens: Tuple[int, ...]
    knowledge: Tuple[SubjectFact, ...] = ()

    def __post_init__(self):
        self.direction = np.asarray(self.direction, dtype=np.float32)
        self.hedge_tokens = tuple(sorted(int(token) for token in self.hedge_tokens))
        self.knowledge = tuple(self.knowledge)
        norm = float(np.linalg.norm(self.direction.astype(np.float64)))
        if abs(norm - 1.0) > 1e-6:
            raise SchemaError(f"Planted direction must have unit norm, got {norm:.9f}")

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'PlantedFeature':
        return cls(
            direction=decode_array(data['direction']),
            injection_layer=int(data['injection_layer']),
            hedge_tokens=tuple(int(token) for token in data['hedge_tokens']),
            knowledge=tuple(SubjectFact.from_dict(item) for item in data.get('knowledge', []))
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            'direction': encode_array(self.direction),
            'injection_layer': self.injection_layer,
            'hedge_tokens': list(self.hedge_tokens),
            'knowledge': [fact.to_dict() for fact in self.knowledge]
        }


LAYER_TENSORS = (
    'ln1_gain', 'ln1_bias', 'w_q', 'w_k', 'w_v', 'w_o',
    'ln2_gain', 'ln2_bias', 'w_in', 'b_in', 'w_out', 'b_out',
)


@dataclass
class LayerWeights:
    ln1_gain: np.ndarray
    ln1_bias: np.ndarray
    w_q: np.ndarray
    w_k: np.ndarray
    w_v: np.ndarray
    w_o: np.ndarray
    ln2_gain: np.ndarray
    ln2_bias: np.ndarray
    w_in: np.ndarray
    b_in: np.ndarray
    w_out: np.ndarray
    b_out: np.ndarray

    def check_shapes(self, d_model: int, index: int) -> None:
        hidden = self.w_in.shape[1] if self.w_in.ndim == 2 else -1
        expected = {
            'ln1_gain': (d_model,), 'ln1_bias': (d_model,),
            'w_q': (d_model, d_model), 'w_k': (d_model, d_model),
            'w_v': (d_model, d_model), 'w_o': (d_model, d_model),
            'ln2_gain': (d_model,), 'ln2_bias': (d_model,),
            'w_in': (d_model, hidden), 'b_in': (hidden,),
            'w_out': (hidden, d_model), 'b_out': (d_model,),
        }
        for name, shape in expected.items():
            actual = getattr(self, name).shape
            if actual != shape:
                raise SchemaError(f"Layer {index} tensor {name} has shape {actual}, expected {shape}")

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'LayerWeights':
        return cls(**{name: decode_array(data[name]) for name in LAYER_TENSORS})

    def to_dict(self) -> Dict[str, Any]:
        return {name: encode_array(getattr(self, name)) for name in LAYER_TENSORS}


@dataclass
class ModelWeights:
    config: ModelConfig
    token_embedding: np.ndarray
    position_embedding: np.ndarray
    layers: List[LayerWeights]
    unembedding: np.ndarray
    unembedding_bias: np.ndarray
    planted: Optional[PlantedFeature] = None

    def __post_init__(self):
        config = self.config
        if self.token_embedding.shape != (config.vocab_size, config.d_model):
            raise SchemaError("token_embedding shape does not match vocab_size x d_model")
        if self.position_embedding.shape != (config.context_len, config.d_model):
            raise SchemaError("position_embedding shape does not match context_len x d_model")
        if len(self.layers) != config.n_layers:
            raise SchemaError(f"Expected {config.n_layers} layers, got {len(self.layers)}")
        for index, layer in enumerate(self.layers):
            layer.check_shapes(config.d_model, index)
        if self.unembedding.shape != (config.vocab_size, config.d_model):
            raise SchemaError("unembedding shape does not match vocab_size x d_model")
        if self.unembedding_bias.shape != (config.vocab_size,):
            raise SchemaError("unembedding_bias shape does not match vocab_size")
        if self.planted is not None:
            if self.planted.direction.shape != (config.d_model,):
                raise SchemaError("planted direction length does not match d_model")
            if not 0 <= self.planted.injection_layer < config.n_layers:
                raise SchemaError("planted injection layer is outside the model")

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'ModelWeights':
        if data.get('format') != WEIGHTS_FORMAT:
            raise SchemaError(f"Not a model weights file (format={data.get('format')!r})")
        if data.get('version') != WEIGHTS_VERSION:
            raise SchemaError(f"Unsupported model weights version: {data.get('version')!r}")
        tensors = data['tensors']
        planted = data.get('planted')
        return cls(
            config=ModelConfig.from_dict(data['config']),
            token_embedding=decode_array(tensors['token_embedding']),
            position_embedding=decode_array(tensors['position_embedding']),
            layers=[LayerWeights.from_dict(layer) for layer in tensors['layers']],
            unembedding=decode_array(tensors['unembedding']),
            unembedding_bias=decode_array(tensors['unembedding_bias']),
            planted=PlantedFeature.from_dict(planted) if planted is not None else None
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            'format': WEIGHTS_FORMAT,
            'version': WEIGHTS_VERSION,
            'config': self.config.to_dict(),
            'tensors': {
                'token_embedding': encode_array(self.token_embedding),
                'position_embedding': encode_array(self.position_embedding),
                'layers': [layer.to_dict() for layer in self.layers],
                'unembedding': encode_array(self.unembedding),
                'unembedding_bias': encode_array(self.unembedding_bias)
            },
            'planted': self.planted.to_dict() if self.planted is not None else None
        }
