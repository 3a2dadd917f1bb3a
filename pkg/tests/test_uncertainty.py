import math

import numpy as np
import pytest

from src.models.tinylm.schema import SamplingParams
from src.services.uncertainty.clustering import (
    UncertaintyInputError,
    cluster_semantic,
    normalize_su,
    semantic_entropy,
)
from src.services.uncertainty.sampling import SeedCollisionError, derive_seeds, sample_answers
from src.services.uncertainty.scoring import (
    LexicalVUScorer,
    detect_abstention,
    load_abstention_phrases,
    load_prototype_bank,
    question_vu,
    score_vu_lexical,
)
from src.services.uncertainty.service import UncertaintyService
from src.utils.text import contains_either

# Sampled responses of a question the model mostly refuses, labeled by meaning.
REFUSAL_EXAMPLE = [
    ("It sold its one millionth burger in 1955", "1955"),
    ("I'm sorry, but I am unable to verify when it sold", "refuse"),
    ("I need more information about which one you mean", "clarify"),
    ("It first sold 1 million burgers in 1954", "1955"),
    ("It is a chain that has been selling burgers for many", "chain"),
    ("I am unable to verify when it sold 1 million burgers.", "refuse"),
    ("It was founded by two brothers and initially operated a", "founders"),
    ("I'm not aware of a specific date when it sold 1 million", "refuse"),
    ("It achieved this milestone on April 15, 1955", "1955"),
    ("I am unable to verify when it first sold 1 million burgers.", "refuse"),
]


@pytest.fixture(scope="module")
def bank():
    return load_prototype_bank()


def test_identical_answers_form_one_cluster():
    assert cluster_semantic(["Paris"] * 10) == [0] * 10


def test_normalized_match_groups_variants():
    assert cluster_semantic(["The Paris", "paris!", "Lyon", "It is Paris"]) == [0, 0, 1, 0]


def test_distinct_answers_are_singletons():
    answers = [f"answer {chr(ord('a') + i)}{i}" for i in range(10)]
    assert cluster_semantic(answers, lambda a, b: a == b) == list(range(10))


def test_labeled_example_reproduces_cluster_counts_and_entropy():
    labels = dict(REFUSAL_EXAMPLE)
    assignment = cluster_semantic([text for text, _ in REFUSAL_EXAMPLE], lambda a, b: labels[a] == labels[b])
    assert assignment == [0, 1, 2, 0, 3, 1, 4, 1, 0, 1]
    assert sorted(np.bincount(assignment).tolist()) == [1, 1, 1, 3, 4]
    assert semantic_entropy(assignment) == pytest.approx(1.42, abs=0.005)


def test_entropy_extremes():
    assert semantic_entropy([0] * 10) == pytest.approx(0.0, abs=0.005)
    assert semantic_entropy(list(range(10))) == pytest.approx(2.30, abs=0.005)
    assert semantic_entropy(list(range(10))) == pytest.approx(math.log(10))


def test_entropy_is_permutation_invariant_and_merging_never_increases_it():
    rng = np.random.default_rng(3)
    assignment = [0, 1, 1, 2, 2, 2, 3, 0, 1, 4]
    shuffled = rng.permutation(assignment).tolist()
    assert semantic_entropy(shuffled) == pytest.approx(semantic_entropy(assignment))
    merged = [0 if cluster == 4 else cluster for cluster in assignment]
    assert semantic_entropy(merged) <= semantic_entropy(assignment)


def test_normalize_su():
    assert normalize_su(math.log(10), 10) == 1.0
    assert normalize_su(0.0, 10) == 0.0
    assert normalize_su(1.42, 10) == pytest.approx(0.6167, abs=1e-3)
    with pytest.raises(UncertaintyInputError):
        normalize_su(0.0, 1)
    with pytest.raises(UncertaintyInputError):
        normalize_su(3.0, 10)


def _overlaps(bank, text, vectors):
    return bool(np.any(vectors @ bank.embed(text) > 0))


def test_uncertainty_prototype_scores_near_one(bank):
    phrase = next(p for p in bank.uncertain if not _overlaps(bank, p, bank.certain_vectors))
    assert score_vu_lexical(phrase, bank) >= 0.9


def test_text_sharing_no_ngrams_scores_one_half(bank):
    candidates = ["zzz", "qqqx", "xjxj", "vwvw", "kqkq"]
    text = next(
        c for c in candidates
        if not _overlaps(bank, c, bank.uncertain_vectors) and not _overlaps(bank, c, bank.certain_vectors)
    )
    assert score_vu_lexical(text, bank) == pytest.approx(0.5)


def test_hedged_answer_scores_above_confident_answer(bank):
    hedged = score_vu_lexical("I'm not sure, but maybe Bournemouth?", bank)
    confident = score_vu_lexical("It's Bournemouth.", bank)
    assert hedged > confident


def test_lexical_vu_ignores_case_and_trailing_whitespace(bank):
    assert score_vu_lexical("Maybe Tenima  ", bank) == pytest.approx(score_vu_lexical("maybe tenima", bank))


def test_lexical_scorer_treats_empty_answer_as_a_punt(bank):
    scorer = LexicalVUScorer(bank)
    assert scorer("q", "") == 1.0
    with pytest.raises(UncertaintyInputError):
        score_vu_lexical("   ", bank)


def test_question_vu_is_the_mean():
    assert question_vu([0.2, 0.4]) == pytest.approx(0.3)
    assert question_vu([0.0, 0.0, 0.0]) == 0.0
    values = np.random.default_rng(5).random(10).tolist()
    assert question_vu(values) == pytest.approx(math.fsum(values) / 10, abs=1e-9)
    assert min(values) <= question_vu(values) <= max(values)


def test_abstention_detection():
    phrases = load_abstention_phrases()
    assert detect_abstention("I am unable to verify the name of the third river.", phrases)
    assert detect_abstention("I don't know", phrases)
    assert not detect_abstention("Paris.", phrases)
    assert not detect_abstention("", phrases)
    with pytest.raises(UncertaintyInputError):
        detect_abstention("Paris", [])


def test_derive_seeds_are_distinct_and_stable():
    seeds = derive_seeds(42, 10)
    assert len(set(seeds)) == 10
    assert seeds == derive_seeds(42, 10)
    assert derive_seeds(43, 10) != seeds


def test_sample_answers_shapes_and_seed_checks(planted_model):
    high = SamplingParams(temperature=1.0)
    low = SamplingParams(temperature=0.1)
    answer_set = sample_answers(planted_model, "Where is <|s000|> located?", 4, high, low, question_id="q")
    assert answer_set.n == 4
    assert answer_set.most_likely.sample.activations is not None
    assert all(answer.sample.activations is None for answer in answer_set.samples)

    with pytest.raises(SeedCollisionError):
        sample_answers(planted_model, "Where?", 2, high, low, seeds=[1, 1])
    with pytest.raises(UncertaintyInputError):
        sample_answers(planted_model, "Where?", 1, high, low)


def test_service_scores_every_answer(bank, make_answer_set):
    service = UncertaintyService(LexicalVUScorer(bank), load_abstention_phrases(), contains_either)
    answer_set = make_answer_set("Tenima", ["Tenima", "maybe Tenima", "I don't know", "Polesh"])
    scored = service.score(answer_set)

    assert scored.clusters == [0, 0, 1, 2]
    assert all(answer.vu is not None for answer in scored.all_answers())
    assert [answer.abstained for answer in scored.samples] == [False, False, True, False]

    scores = UncertaintyService.question_scores(scored)
    assert scores.su == pytest.approx(semantic_entropy([0, 0, 1, 2]))
    assert scores.su_norm == pytest.approx(scores.su / math.log(4))
    assert scores.vu == pytest.approx(question_vu(scored.sample_vus))
