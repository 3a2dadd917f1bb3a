from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence

import pytest

from src.config.experiment import ExperimentConfig
from src.config.settings import JudgeConfig
from src.models.answers.schema import Answer, AnswerSet
from src.models.report.schema import MetricsReport
from src.models.tinylm.schema import GenerationSample, ModelConfig, SamplingParams
from src.services.judge.stub import OfflineJudgeStub
from src.services.pipeline.service import ExperimentPipeline
from src.services.tinylm.planted import build_planted_model
from src.services.tinylm.service import TinyLM
from src.services.tinylm.tokenizer import TokenLayout

# Small enough to keep the suite quick, large enough for the planted effects to show.
PIPELINE_OVERRIDES = dict(
    n_questions=200,
    contrastive_questions=60,
    n_uncertain=60,
    n_certain=60,
    sweep_questions=20,
)

TINY_OVERRIDES = dict(
    n_questions=24,
    n_samples=4,
    contrastive_questions=8,
    n_uncertain=8,
    n_certain=8,
    sweep_questions=3,
    sweep_grid=[-1.0, 0.0, 1.0],
)


@pytest.fixture(scope="session")
def planted_model() -> TinyLM:
    config = ModelConfig(vocab_size=TokenLayout.required_vocab(240), seed=7)
    return TinyLM(build_planted_model(config))


@dataclass
class PipelineRun:
    pipeline: ExperimentPipeline
    before: MetricsReport
    after: MetricsReport


@pytest.fixture(scope="session")
def pipeline_run(tmp_path_factory) -> PipelineRun:
    out_dir = tmp_path_factory.mktemp("run")
    config = ExperimentConfig(out_dir=str(out_dir), seed=7, **PIPELINE_OVERRIDES)
    pipeline = ExperimentPipeline(config)
    before, after = pipeline.run_all()
    return PipelineRun(pipeline=pipeline, before=before, after=after)


@pytest.fixture
def tiny_config(tmp_path) -> Callable[..., ExperimentConfig]:
    def build(out_name: str = "out", **overrides) -> ExperimentConfig:
        values = dict(TINY_OVERRIDES, seed=11, out_dir=str(tmp_path / out_name))
        values.update(overrides)
        return ExperimentConfig(**values)
    return build


@pytest.fixture
def judge_config() -> JudgeConfig:
    return JudgeConfig(
        base_url="http://judge.invalid/v1",
        api_key="test-key",
        model_name="stub-judge",
        max_retries=3,
        max_concurrent=1
    )


@pytest.fixture
def judge_stub() -> OfflineJudgeStub:
    return OfflineJudgeStub(default=lambda system, user: "Decisiveness score: 0.8")


def _sample(text: str, seed: int = 0) -> GenerationSample:
    return GenerationSample(text=text, token_ids=[], logprobs=[], params=SamplingParams(rng_seed=seed))


@pytest.fixture
def make_answer_set() -> Callable[..., AnswerSet]:
    """Answer set from plain texts; scores are attached only when given."""

    def build(
        most_likely: str,
        samples: Sequence[str],
        vus: Optional[Sequence[float]] = None,
        abstained: Optional[Sequence[bool]] = None,
        question_id: str = "q0000",
        clusters: Optional[List[int]] = None
    ) -> AnswerSet:
        texts = [most_likely] + list(samples)
        vus = list(vus) if vus is not None else [None] * len(texts)
        abstained = list(abstained) if abstained is not None else [None] * len(texts)
        answers = [
            Answer(_sample(text, seed), vu=vu, abstained=flag)
            for seed, (text, vu, flag) in enumerate(zip(texts, vus, abstained))
        ]
        return AnswerSet(
            question_id=question_id,
            question="Where is it located?",
            most_likely=answers[0],
            samples=answers[1:],
            clusters=clusters
        )

    return build

