import hashlib
import json
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, List, Optional

from src.config.settings import MAX_ALPHA_PRESETS, settings
from src.utils.errors import ConfigurationError
from src.utils.file_handler.json_handler import JSONHandler, JSONHandlerError
from src.utils.validators.input_validator import InputValidator

JUDGE_ENV_OVERRIDES = {
    "JUDGE_API_URL": "judge_base_url",
    "JUDGE_MODEL": "judge_model",
}

# Keys that name where outputs go or which host serves the judge; they do not change what is computed.
UNHASHED_KEYS = ("out_dir", "judge_base_url")


@dataclass
class ExperimentConfig:
    model_path: Optional[str] = None
    dataset_path: Optional[str] = None
    out_dir: str = field(default_factory=lambda: str(settings.paths.runs_dir / "default"))
    seed: int = field(default_factory=lambda: settings.model.seed)

    d_model: int = field(default_factory=lambda: settings.model.d_model)
    n_layers: int = field(default_factory=lambda: settings.model.n_layers)
    n_heads: int = field(default_factory=lambda: settings.model.n_heads)
    context_len: int = field(default_factory=lambda: settings.model.context_len)
    n_subjects: int = field(default_factory=lambda: settings.model.n_subjects)
    n_questions: int = 200

    n_samples: int = field(default_factory=lambda: settings.sampling.n_samples)
    high_temperature: float = field(default_factory=lambda: settings.sampling.high_temperature)
    low_temperature: float = field(default_factory=lambda: settings.sampling.low_temperature)
    top_p: float = field(default_factory=lambda: settings.sampling.top_p)
    top_k: int = field(default_factory=lambda: settings.sampling.top_k)
    max_new_tokens: int = field(default_factory=lambda: settings.sampling.max_new_tokens)

    window: Optional[List[int]] = None
    contrastive_questions: int = 100
    policy: str = "topbottom"
    n_uncertain: int = 100
    n_certain: int = 100
    vu_low: float = field(default_factory=lambda: settings.uncertainty.vu_low)
    vu_high: float = field(default_factory=lambda: settings.uncertainty.vu_high)

    max_alpha: float = field(default_factory=lambda: settings.steering.max_alpha)
    positions: str = field(default_factory=lambda: settings.steering.positions)
    normalize: bool = field(default_factory=lambda: settings.steering.normalize)
    sweep_grid: List[float] = field(default_factory=lambda: list(settings.steering.sweep_grid))
    sweep_questions: int = 40
    gate: bool = False

    scorer: str = "lexical"
    equivalence: str = "lexical"
    ridge: float = field(default_factory=lambda: settings.probes.ridge)
    holdout_fraction: float = field(default_factory=lambda: settings.probes.holdout_fraction)

    judge_base_url: Optional[str] = None
    judge_model: Optional[str] = None

    def __post_init__(self):
        try:
            self._validate()
        except (TypeError, ValueError) as e:
            if isinstance(e, ConfigurationError):
                raise
            raise ConfigurationError(f"Invalid experiment config: {str(e)}") from e

    def _validate(self) -> None:
        for name in ("n_questions", "contrastive_questions", "n_uncertain", "n_certain", "sweep_questions"):
            InputValidator.validate_positive(getattr(self, name), name)
        if not isinstance(self.seed, int) or isinstance(self.seed, bool) or self.seed < 0:
            raise ConfigurationError("seed must be a non-negative integer")
        if self.n_samples < 2:
            raise ConfigurationError("n_samples must be at least 2")
        InputValidator.validate_choice(self.policy, ("topbottom", "threshold"), "policy")
        InputValidator.validate_choice(self.scorer, ("lexical", "judge"), "scorer")
        InputValidator.validate_choice(self.equivalence, ("lexical", "judge"), "equivalence")
        InputValidator.validate_choice(self.positions, ("all_tokens", "last_token"), "positions")
        InputValidator.validate_unit_interval(self.vu_low, "vu_low")
        InputValidator.validate_unit_interval(self.vu_high, "vu_high")
        if self.vu_low >= self.vu_high:
            raise ConfigurationError("VU thresholds must satisfy vu_low < vu_high")
        if isinstance(self.max_alpha, str):
            if self.max_alpha not in MAX_ALPHA_PRESETS:
                raise ConfigurationError(f"max_alpha preset must be one of: {', '.join(MAX_ALPHA_PRESETS)}")
            self.max_alpha = MAX_ALPHA_PRESETS[self.max_alpha]
        self.max_alpha = float(InputValidator.validate_non_negative(self.max_alpha, "max_alpha"))
        if not self.sweep_grid:
            raise ConfigurationError("sweep_grid must not be empty")
        if self.window is not None:
            if not self.window:
                raise ConfigurationError("window must name at least one layer")
            InputValidator.validate_indices(self.window, self.n_layers, "window")
            self.window = sorted(int(layer) for layer in self.window)
        if not 0.0 < self.holdout_fraction < 1.0:
            raise ConfigurationError("holdout_fraction must be in (0.0, 1.0)")
        self.sweep_grid = [float(alpha) for alpha in self.sweep_grid]

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'ExperimentConfig':
        known = {item.name for item in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigurationError(f"Unknown experiment config keys: {', '.join(unknown)}")
        return cls(**data)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def with_overrides(self, **overrides: Any) -> 'ExperimentConfig':
        data = self.to_dict()
        data.update({key: value for key, value in overrides.items() if value is not None})
        return ExperimentConfig.from_dict(data)

    @property
    def config_hash(self) -> str:
        """sha256 of the canonical JSON of every key that affects results."""
        data = {key: value for key, value in self.to_dict().items() if key not in UNHASHED_KEYS}
        canonical = json.dumps(data, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    @property
    def output_dir(self) -> Path:
        return Path(self.out_dir)

    def check_paths(self) -> None:
        """Input files must exist before any compute starts."""
        for name in ("model_path", "dataset_path"):
            value = getattr(self, name)
            if value is not None and not JSONHandler.file_exists(Path(value)):
                raise ConfigurationError(f"{name} does not exist: {value}")


def load_experiment_config(
    path: Optional[Path] = None,
    seed: Optional[int] = None,
    out_dir: Optional[str] = None
) -> ExperimentConfig:
    """File values over settings defaults, CLI flags over the file, JUDGE_* env over judge keys."""
    data: Dict[str, Any] = {}
    if path is not None:
        try:
            data = JSONHandler.read_json(Path(path))
        except JSONHandlerError as e:
            raise ConfigurationError(f"Failed to read experiment config: {str(e)}") from e
        if not isinstance(data, dict):
            raise ConfigurationError("Experiment config must be a JSON object")

    for variable, key in JUDGE_ENV_OVERRIDES.items():
        value = os.getenv(variable)
        if value:
            data[key] = value

    config = ExperimentConfig.from_dict(data)
    return config.with_overrides(seed=seed, out_dir=out_dir)
