from typing import List

import numpy as np

from src.models.dataset.schema import QARecord
from src.services.tinylm.service import TinyLM
from src.services.tinylm.tokenizer import ENTITY_NAMES
from src.utils.errors import ConfigurationError

QUESTION_TEMPLATE = "Where is {subject} located?"
UNREACHABLE_GOLD = "Hollow Reach {index}"


def make_dataset(model: TinyLM, n_questions: int, seed: int) -> List[QARecord]:
    """Questions about the planted subjects, in a seeded order.

    Known subjects carry their planted entity as gold. Unknown subjects get a
    gold place name the model has no token for, so any answer is wrong.
    """
    planted = model.planted
    if planted is None or not planted.knowledge:
        raise ConfigurationError("Synthetic datasets need a planted model with a knowledge table")
    facts = planted.knowledge
    if not 1 <= n_questions <= len(facts):
        raise ConfigurationError(f"n_questions must be in [1, {len(facts)}] for this model")

    order = np.random.default_rng(seed).permutation(len(facts))[:n_questions]
    records = []
    for position, index in enumerate(order):
        fact = facts[int(index)]
        subject = model.tokenizer.token_string(fact.token_id)
        if fact.known:
            gold = [ENTITY_NAMES[fact.gold_entity]]
        else:
            gold = [UNREACHABLE_GOLD.format(index=int(index))]
        records.append(QARecord(
            id=f"q{position:04d}",
            question=QUESTION_TEMPLATE.format(subject=subject),
            gold=gold
        ))
    return records
