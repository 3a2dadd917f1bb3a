import csv
import io
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from src.models.answers.schema import Answer, AnswerSet, UncertaintyScores
from src.models.probe.schema import Detector
from src.models.report.schema import SweepResult
from src.models.steering.schema import AdaptiveAlpha, ConstantAlpha, SteeringConfig, SteeringMode
from src.models.tinylm.schema import GenerationSample, InterventionSpec, SamplingParams
from src.services.probes.service import detector_decisions
from src.services.tinylm.prompts import AnswerPromptBuilder
from src.services.tinylm.service import TinyLM
from src.services.uncertainty.sampling import sample_answers
from src.services.uncertainty.scoring import VUScorer, question_vu
from src.utils.errors import DataError, HedgeScopeError, StageError
from src.utils.file_handler.json_handler import JSONHandler
from src.utils.logger import get_logger

logger = get_logger(__name__)


class SteeringInputError(DataError):
    pass


def adaptive_alpha(su_norm: float, vu: float, max_alpha: float) -> float:
    if not 0.0 <= su_norm <= 1.0 or not 0.0 <= vu <= 1.0:
        raise SteeringInputError("su_norm and vu must be in [0, 1]")
    if max_alpha < 0:
        raise SteeringInputError("max_alpha cannot be negative")
    return min(max(su_norm - vu, 0.0), max_alpha)


def make_interventions(config: SteeringConfig, alpha: Optional[float] = None) -> List[InterventionSpec]:
    """One spec per window layer; alpha defaults to the config's constant mode."""
    if alpha is None:
        if not isinstance(config.mode, ConstantAlpha):
            raise SteeringInputError("An adaptive steering config needs an explicit alpha")
        alpha = config.mode.alpha
    return [
        InterventionSpec(
            layers=(layer,),
            direction=config.direction.layers[layer],
            alpha=float(alpha),
            positions=config.positions
        )
        for layer in config.window
    ]


@dataclass(frozen=True)
class SweepQuestion:
    question_id: str
    question: str
    seeds: Tuple[int, ...]
    low_seed: int


def sweep_alpha(
    model: TinyLM,
    questions: Sequence[SweepQuestion],
    config: SteeringConfig,
    alpha_grid: Sequence[float],
    scorer: VUScorer,
    high_params: SamplingParams,
    low_params: SamplingParams
) -> SweepResult:
    """Mean question VU under constant-alpha steering, one point per grid value.

    Every alpha reuses the same per-question seeds.
    """
    if not alpha_grid:
        raise SteeringInputError("alpha grid must not be empty")
    if not questions:
        raise SteeringInputError("sweep needs at least one question")

    mean_vus: List[float] = []
    counts: List[int] = []
    for alpha in alpha_grid:
        try:
            interventions = make_interventions(config.with_alpha(alpha))
            vus = []
            count = 0
            for item in questions:
                answer_set = sample_answers(
                    model, item.question, len(item.seeds), high_params, low_params.with_seed(item.low_seed),
                    question_id=item.question_id, seeds=item.seeds,
                    interventions=interventions, capture_prefill=False
                )
                answer_vus = [scorer(item.question, text) for text in answer_set.sample_texts]
                vus.append(question_vu(answer_vus))
                count += len(answer_vus)
        except HedgeScopeError as e:
            raise StageError(f"sweep alpha={alpha}", e) from e
        mean_vus.append(min(max(float(np.mean(vus)), 0.0), 1.0))
        counts.append(count)
        logger.info("Sweep alpha=%s mean_vu=%.4f n=%d", alpha, mean_vus[-1], count)

    return SweepResult(alphas=[float(alpha) for alpha in alpha_grid], mean_vu=mean_vus, counts=counts)


def sweep_csv(result: SweepResult) -> str:
    buffer = io.StringIO()
    writer = csv.DictWriter(buffer, fieldnames=['alpha', 'mean_vu', 'n'], lineterminator="\n")
    writer.writeheader()
    for row in result.rows():
        writer.writerow({'alpha': repr(row['alpha']), 'mean_vu': repr(row['mean_vu']), 'n': row['n']})
    return buffer.getvalue()


def write_sweep_csv(path: Path, result: SweepResult) -> str:
    text = sweep_csv(result)
    JSONHandler.write_text_atomic(path, text)
    return JSONHandler.content_hash(text)


@dataclass
class MUCResult:
    sample: GenerationSample
    alpha: float
    gated: bool = False


def mode_alpha(mode: SteeringMode, scores: UncertaintyScores) -> float:
    if isinstance(mode, ConstantAlpha):
        return mode.alpha
    return adaptive_alpha(scores.su_norm, scores.vu, mode.max_alpha)


def muc_alpha(
    scores: UncertaintyScores,
    mode: SteeringMode,
    gate: Optional[Detector] = None,
    gate_features: Optional[Sequence[float]] = None
) -> Tuple[float, bool]:
    """Alpha for the steering mode, forced to 0 when a gate detector calls the record clean."""
    alpha = mode_alpha(mode, scores)
    if gate is None:
        return alpha, False
    if gate_features is None:
        raise SteeringInputError("A gate detector needs the record's detector features")
    hallucinated = bool(detector_decisions(gate, np.asarray([gate_features], dtype=np.float64))[0])
    return (alpha, False) if hallucinated else (0.0, True)


def muc_pipeline(
    model: TinyLM,
    record: AnswerSet,
    config: SteeringConfig,
    scores: UncertaintyScores,
    low_params: SamplingParams,
    gate: Optional[Detector] = None,
    gate_features: Optional[Sequence[float]] = None,
    max_alpha: Optional[float] = None
) -> MUCResult:
    """Regenerate the most-likely answer under the config's steering mode.

    max_alpha, when given, replaces the config's mode with an adaptive one at that cap.
    """
    mode = AdaptiveAlpha(float(max_alpha)) if max_alpha is not None else config.mode
    alpha, gated = muc_alpha(scores, mode, gate, gate_features)
    if alpha == 0.0:
        return MUCResult(sample=record.most_likely.sample, alpha=0.0, gated=gated)
    prompt = AnswerPromptBuilder.encode_question(
        model.tokenizer, record.question, max_tokens=model.prompt_budget(low_params)
    )
    sample = model.generate(prompt, low_params, make_interventions(config, alpha), capture_prefill=True)
    return MUCResult(sample=sample, alpha=alpha, gated=gated)


def recalibrate_answer_set(
    model: TinyLM,
    record: AnswerSet,
    config: SteeringConfig,
    muc: MUCResult,
    high_params: SamplingParams,
    seeds: Sequence[int]
) -> AnswerSet:
    """Answer set after calibration: the MUC answer plus samples redrawn under the same alpha.

    A record left unsteered is returned as is.
    """
    if muc.alpha == 0.0:
        return record
    if len(seeds) != record.n:
        raise SteeringInputError(f"Need {record.n} seeds, got {len(seeds)}")
    prompt = AnswerPromptBuilder.encode_question(
        model.tokenizer, record.question, max_tokens=model.prompt_budget(high_params)
    )
    interventions = make_interventions(config, muc.alpha)
    samples = [model.generate(prompt, high_params.with_seed(seed), interventions) for seed in seeds]
    return AnswerSet(
        question_id=record.question_id,
        question=record.question,
        most_likely=Answer(muc.sample),
        samples=[Answer(sample) for sample in samples]
    )
