from typing import List, Optional, Sequence

import numpy as np

from src.models.answers.schema import Answer, AnswerSet
from src.models.tinylm.schema import InterventionSpec, SamplingParams
from src.services.tinylm.prompts import AnswerPromptBuilder
from src.services.tinylm.service import TinyLM
from src.utils.errors import DataError
from .clustering import UncertaintyInputError


class SeedCollisionError(DataError):
    pass


def derive_seeds(base_seed: int, n: int) -> List[int]:
    """n distinct 64-bit seeds spawned from one base seed."""
    children = np.random.SeedSequence(base_seed).spawn(n)
    return [int(child.generate_state(1, dtype=np.uint64)[0]) for child in children]


def sample_answers(
    model: TinyLM,
    question: str,
    n: int,
    high_params: SamplingParams,
    low_params: SamplingParams,
    question_id: str = "",
    seeds: Optional[Sequence[int]] = None,
    mode: Optional[str] = None,
    interventions: Sequence[InterventionSpec] = (),
    capture_prefill: bool = True
) -> AnswerSet:
    """Most-likely answer at low temperature plus n high-temperature samples."""
    if n < 2:
        raise UncertaintyInputError("sample_answers needs n >= 2")
    seeds = list(seeds) if seeds is not None else derive_seeds(high_params.rng_seed, n)
    if len(seeds) != n:
        raise UncertaintyInputError(f"Need {n} seeds, got {len(seeds)}")
    if len(set(seeds)) != len(seeds):
        raise SeedCollisionError("Sample seeds must be distinct")

    prompt = AnswerPromptBuilder.encode_question(
        model.tokenizer, question, mode=mode, max_tokens=model.prompt_budget(low_params, high_params)
    )
    most_likely = model.generate(prompt, low_params, interventions, capture_prefill=capture_prefill)
    samples = [
        model.generate(prompt, high_params.with_seed(seed), interventions)
        for seed in seeds
    ]
    return AnswerSet(
        question_id=question_id,
        question=question,
        most_likely=Answer(most_likely),
        samples=[Answer(sample) for sample in samples]
    )
