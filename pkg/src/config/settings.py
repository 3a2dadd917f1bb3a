import os
from pathlib import Path
from typing import Optional, Dict
from dataclasses import dataclass, field
from dotenv import load_dotenv

from src.utils.errors import ConfigurationError

load_dotenv()

BASE_DIR = Path(__file__).resolve().parent.parent.parent

MAX_ALPHA_PRESETS: Dict[str, float] = {
    "llama": 1.0,
    "mistral": 0.4,
    "qwen": 3.0,
}


@dataclass
class JudgeConfig:
    base_url: str = field(default_factory=lambda: os.getenv("JUDGE_API_URL", "https://api.openai.com/v1"))
    api_key: str = field(default_factory=lambda: os.getenv("JUDGE_API_KEY", ""))
    model_name: str = field(default_factory=lambda: os.getenv("JUDGE_MODEL", "gpt-4o-mini"))
    timeout: float = 60.0
    max_retries: int = 3
    max_concurrent: int = 4
    temperature: float = 0.0
    backoff_base: float = 0.5
    backoff_factor: float = 2.0
    backoff_jitter: float = 0.1
    cache_size: int = 65536

    def __post_init__(self):
        if not self.base_url:
            raise ValueError("Judge base_url is required. Set JUDGE_API_URL environment variable.")
        if not self.model_name:
            raise ValueError("Judge model_name is required. Set JUDGE_MODEL environment variable.")
        if self.timeout <= 0:
            raise ValueError("Judge timeout must be greater than 0")
        if self.max_retries < 0:
            raise ValueError("Judge max_retries cannot be negative")
        if self.max_concurrent < 1:
            raise ValueError("Judge max_concurrent must be at least 1")
        if self.backoff_base < 0 or self.backoff_factor < 1.0:
            raise ValueError("Judge backoff must have base >= 0 and factor >= 1")
        if self.cache_size < 1:
            raise ValueError("Judge cache_size must be at least 1")


@dataclass
class PathConfig:
    base_dir: Path = field(default_factory=lambda: BASE_DIR)
    data_dir: Path = field(init=False)
    prototypes_file: Path = field(init=False)
    abstention_file: Path = field(init=False)
    runs_dir: Path = field(init=False)

    def __post_init__(self):
        self.data_dir = self.base_dir / "data"
        self.prototypes_file = self.data_dir / "prototypes.json"
        self.abstention_file = self.data_dir / "abstention_phrases.txt"
        self.runs_dir = self.base_dir / "runs"


@dataclass
class ModelDefaults:
    d_model: int = 64
    n_layers: int = 6
    n_heads: int = 4
    context_len: int = 128
    n_subjects: int = 240
    seed: int = 7

    def __post_init__(self):
        if self.d_model % self.n_heads != 0:
            raise ValueError("d_model must be divisible by n_heads")
        if min(self.d_model, self.n_layers, self.n_heads, self.context_len, self.n_subjects) < 1:
            raise ValueError("Model sizes must all be positive")


@dataclass
class PlantedDefaults:
    mode_scale: float = 3.0
    marker_scale: float = 4.0
    content_radius: float = 10.0
    attention_gap: float = 14.0
    knowledge_scale: float = 7.0
    knowledge_noise: float = 0.3
    known_fraction: float = 0.5
    hedge_spread: float = 1.0
    hedge_gain: float = 2.0
    abstain_gain: float = 3.0
    hedge_bias: float = -0.7
    abstain_bias: float = -3.5
    opener_gain: float = 4.0
    opener_suppress: float = 60.0
    stop_gain: float = 20.0
    stop_suppress: float = 60.0
    eos_bias: float = -8.0
    byte_bias: float = -12.0
    reserved_bias: float = -30.0
    noise_scale: float = 0.005

    def __post_init__(self):
        if self.mode_scale <= 0 or self.marker_scale <= 0:
            raise ValueError("mode_scale and marker_scale must be greater than 0")
        if not 0.0 <= self.known_fraction <= 1.0:
            raise ValueError("known_fraction must be between 0.0 and 1.0")
        if self.hedge_gain <= 0 or self.abstain_gain <= 0:
            raise ValueError("hedge gains must be greater than 0")
        if self.noise_scale < 0:
            raise ValueError("noise_scale cannot be negative")


@dataclass
class SamplingDefaults:
    n_samples: int = 10
    high_temperature: float = 1.0
    low_temperature: float = 0.1
    top_p: float = 0.9
    top_k: int = 50
    max_new_tokens: int = 8

    def __post_init__(self):
        if self.n_samples < 2:
            raise ValueError("n_samples must be at least 2")
        if self.high_temperature <= 0 or self.low_temperature <= 0:
            raise ValueError("temperatures must be greater than 0")
        if not 0.0 < self.top_p <= 1.0:
            raise ValueError("top_p must be in (0.0, 1.0]")
        if self.top_k < 1:
            raise ValueError("top_k must be at least 1")


@dataclass
class UncertaintyDefaults:
    vu_low: float = 0.05
    vu_high: float = 0.9
    ngram: int = 3
    hash_dim: int = 1024

    def __post_init__(self):
        if not 0.0 <= self.vu_low < self.vu_high <= 1.0:
            raise ValueError("VU thresholds must satisfy 0 <= vu_low < vu_high <= 1")
        if self.ngram < 1 or self.hash_dim < 1:
            raise ValueError("ngram and hash_dim must be positive")


@dataclass
class SteeringDefaults:
    max_alpha: float = 1.0
    positions: str = "all_tokens"
    normalize: bool = False
    sweep_grid: tuple = (-2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0)

    def __post_init__(self):
        if self.max_alpha < 0:
            raise ValueError("max_alpha cannot be negative")
        if self.positions not in ["all_tokens", "last_token"]:
            raise ValueError("positions must be one of: all_tokens, last_token")


@dataclass
class ProbeDefaults:
    ridge: float = 1e-3
    irls_max_iter: int = 100
    irls_tol: float = 1e-8
    pca_max_iter: int = 200
    pca_tol: float = 1e-9
    holdout_fraction: float = 0.3

    def __post_init__(self):
        if self.ridge < 0:
            raise ValueError("ridge cannot be negative")
        if self.irls_max_iter < 1 or self.pca_max_iter < 1:
            raise ValueError("iteration caps must be at least 1")
        if not 0.0 < self.holdout_fraction < 1.0:
            raise ValueError("holdout_fraction must be in (0.0, 1.0)")


@dataclass
class ApplicationConfig:
    app_name: str = "HedgeScope"
    version: str = "1.0.0"
    environment: str = field(default_factory=lambda: os.getenv("ENVIRONMENT", "development"))
    debug: bool = field(default_factory=lambda: os.getenv("DEBUG", "False").lower() == "true")
    log_level: str = field(default_factory=lambda: os.getenv("LOG_LEVEL", "WARNING"))
    log_format: str = field(default_factory=lambda: os.getenv("LOG_FORMAT", "txt"))

    def __post_init__(self):
        if self.environment not in ["development", "staging", "production"]:
            raise ValueError("environment must be one of: development, staging, production")
        if self.log_level not in ["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"]:
            raise ValueError("log_level must be one of: DEBUG, INFO, WARNING, ERROR, CRITICAL")
        if self.log_format not in ["txt", "json"]:
            raise ValueError("log_format must be one of: txt, json")


class Settings:
    _instance: Optional['Settings'] = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
            cls._instance._initialized = False
        return cls._instance

    def __init__(self):
        if self._initialized:
            return

        self.app = ApplicationConfig()
        self.paths = PathConfig()
        self.model = ModelDefaults(
            d_model=int(os.getenv("MODEL_D_MODEL", "64")),
            n_layers=int(os.getenv("MODEL_N_LAYERS", "6")),
            n_heads=int(os.getenv("MODEL_N_HEADS", "4")),
            context_len=int(os.getenv("MODEL_CONTEXT_LEN", "128")),
            n_subjects=int(os.getenv("MODEL_N_SUBJECTS", "240")),
            seed=int(os.getenv("MODEL_SEED", "7"))
        )
        self.planted = PlantedDefaults()
        self.sampling = SamplingDefaults()
        self.uncertainty = UncertaintyDefaults()
        self.steering = SteeringDefaults(
            max_alpha=float(os.getenv("MAX_ALPHA", "1.0"))
        )
        self.probes = ProbeDefaults()

        self._initialized = True

    def judge(self) -> JudgeConfig:
        return JudgeConfig()

    def validate(self) -> bool:
        try:
            assert self.paths.prototypes_file.exists(), f"Prototype bank not found: {self.paths.prototypes_file}"
            assert self.paths.abstention_file.exists(), f"Abstention phrases not found: {self.paths.abstention_file}"
            return True
        except AssertionError as e:
            raise ConfigurationError(f"Configuration validation failed: {str(e)}") from e


settings = Settings()
