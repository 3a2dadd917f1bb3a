import numpy as np
import pytest

from src.models.tinylm.schema import InterventionSpec, ModelConfig, PositionPolicy, SamplingParams
from src.services.dataset.synthetic import QUESTION_TEMPLATE
from src.services.tinylm.prompts import AnswerPromptBuilder
from src.services.tinylm.sampler import log_softmax, truncated_distribution
from src.services.tinylm.service import ModelInputError, TinyLM
from src.services.tinylm.tokenizer import BOS_ID, ENTITY_NAMES, ByteTokenizer, TokenLayout
from src.utils.errors import ConfigurationError


def _question_prompt(model: TinyLM, fact, mode=None):
    subject = model.tokenizer.token_string(fact.token_id)
    return AnswerPromptBuilder.encode_question(model.tokenizer, QUESTION_TEMPLATE.format(subject=subject), mode=mode)


def test_required_vocab_counts_every_reserved_token():
    assert TokenLayout.required_vocab(0) == 292
    assert TokenLayout.required_vocab(240) == 532


def test_tokenizer_bytes_and_specials():
    tokenizer = ByteTokenizer(TokenLayout.required_vocab(3))
    assert tokenizer.decode(tokenizer.encode("hello world", add_bos=False)) == "hello world"

    ids = tokenizer.encode("<|s001|>", add_bos=False)
    assert ids == [tokenizer.layout.subject_ids[1]]
    assert tokenizer.encode("x")[0] == BOS_ID
    assert tokenizer.decode([tokenizer.layout.entity_ids[0]]) == ENTITY_NAMES[0]


def test_model_config_rejects_small_vocab_and_bad_heads():
    with pytest.raises(ConfigurationError):
        ModelConfig(vocab_size=100)
    with pytest.raises(ConfigurationError):
        ModelConfig(vocab_size=300, d_model=30, n_heads=4)


def test_truncated_distribution_order_and_mass():
    logits = np.array([1.0, 3.0, 2.0, -5.0])
    ids, probs = truncated_distribution(logits, SamplingParams(temperature=1.0, top_p=1.0, top_k=1))
    assert ids.tolist() == [1]
    assert probs.tolist() == [1.0]

    ids, probs = truncated_distribution(logits, SamplingParams(temperature=1.0, top_p=1.0, top_k=4))
    assert ids.tolist() == [1, 2, 0, 3]
    assert probs.sum() == pytest.approx(1.0)

    ids, _ = truncated_distribution(logits, SamplingParams(temperature=1.0, top_p=0.5, top_k=4))
    assert ids.tolist() == [1]


def test_log_softmax_is_normalized():
    values = log_softmax(np.array([0.5, -1.0, 2.0]))
    assert np.exp(values).sum() == pytest.approx(1.0)
    assert np.all(values <= 0)


def test_planted_feature_metadata(planted_model):
    planted = planted_model.planted
    assert planted.injection_layer == planted_model.config.n_layers // 3
    assert np.linalg.norm(planted.direction.astype(np.float64)) == pytest.approx(1.0, abs=1e-6)
    assert set(planted.hedge_tokens) == set(planted_model.tokenizer.layout.phrase_ids)


def test_generation_is_deterministic_per_seed(planted_model):
    fact = planted_model.planted.knowledge[0]
    prompt = _question_prompt(planted_model, fact)
    params = SamplingParams(temperature=1.0, rng_seed=1234)
    first = planted_model.generate(prompt, params)
    second = planted_model.generate(prompt, params)
    assert first.token_ids == second.token_ids
    assert first.logprobs == second.logprobs
    assert first.text == second.text


def test_zero_alpha_intervention_is_a_no_op(planted_model):
    planted = planted_model.planted
    prompt = _question_prompt(planted_model, planted.knowledge[1])
    spec = InterventionSpec(layers=(planted.injection_layer,), direction=planted.direction, alpha=0.0)
    plain, _ = planted_model.forward(prompt)
    steered, _ = planted_model.forward(prompt, [spec])
    assert np.array_equal(plain, steered)


def test_steering_along_planted_direction_raises_hedge_mass(planted_model):
    planted = planted_model.planted
    prompt = _question_prompt(planted_model, planted.knowledge[2])
    hedge = list(planted.hedge_tokens)

    masses = []
    for alpha in (-3.0, 0.0, 3.0):
        spec = InterventionSpec(layers=(planted.injection_layer,), direction=planted.direction, alpha=alpha)
        logits, _ = planted_model.forward(prompt, [spec])
        masses.append(float(np.exp(log_softmax(logits))[hedge].sum()))
    assert masses[0] < masses[1] < masses[2]


def test_last_token_policy_only_touches_the_final_position(planted_model):
    planted = planted_model.planted
    prompt = _question_prompt(planted_model, planted.knowledge[3])
    layer = planted.injection_layer
    spec = InterventionSpec(
        layers=(layer,), direction=planted.direction, alpha=2.0, positions=PositionPolicy.LAST_TOKEN
    )
    _, plain = planted_model.forward(prompt, capture=[layer])
    _, steered = planted_model.forward(prompt, [spec], capture=[layer])
    assert np.array_equal(plain[layer][:-1], steered[layer][:-1])
    assert not np.array_equal(plain[layer][-1], steered[layer][-1])


def test_known_subjects_are_answered_with_their_entity(planted_model):
    known = [fact for fact in planted_model.planted.knowledge if fact.known][:20]
    hits = 0
    for index, fact in enumerate(known):
        sample = planted_model.generate(
            _question_prompt(planted_model, fact, mode="certain"),
            SamplingParams(temperature=0.1, rng_seed=index)
        )
        hits += ENTITY_NAMES[fact.gold_entity] in sample.text
    assert hits / len(known) >= 0.8


def test_prefill_capture_holds_every_layer(planted_model):
    prompt = _question_prompt(planted_model, planted_model.planted.knowledge[4])
    sample = planted_model.generate(prompt, SamplingParams(temperature=0.1), capture_prefill=True)
    assert sorted(sample.activations) == list(range(planted_model.config.n_layers))
    assert all(vector.shape == (planted_model.config.d_model,) for vector in sample.activations.values())


def test_save_and_load_preserve_logits(planted_model, tmp_path):
    path = tmp_path / "model.json"
    planted_model.save(path)
    loaded = TinyLM.load(path)
    prompt = _question_prompt(planted_model, planted_model.planted.knowledge[5])
    assert np.array_equal(planted_model.forward(prompt)[0], loaded.forward(prompt)[0])
    assert np.array_equal(loaded.planted.direction, planted_model.planted.direction)


def test_input_checks(planted_model):
    with pytest.raises(ModelInputError):
        planted_model.forward([BOS_ID] * (planted_model.config.context_len + 1))
    with pytest.raises(ModelInputError):
        planted_model.forward([planted_model.config.vocab_size])
    with pytest.raises(ModelInputError):
        planted_model.forward([BOS_ID], capture=[planted_model.config.n_layers])


def test_argmax_decoding_ignores_the_seed(planted_model):
    prompt = _question_prompt(planted_model, planted_model.planted.knowledge[6])
    outputs = {
        tuple(planted_model.generate(prompt, SamplingParams(temperature=0.01, top_k=1, rng_seed=seed)).token_ids)
        for seed in (1, 2, 3)
    }
    assert len(outputs) == 1


def test_uncertain_mode_prompt_projects_onto_planted_direction(planted_model):
    planted = planted_model.planted
    prompt = _question_prompt(planted_model, planted.knowledge[7], mode="uncertain")
    activations = planted_model.capture_last_token_activations(prompt)
    _, captured = planted_model.forward(prompt, capture=range(planted_model.config.n_layers))

    layer = planted.injection_layer
    assert np.array_equal(activations[layer], captured[layer][-1])
    assert float(activations[layer] @ planted.direction) > 0.0


def test_long_questions_are_cut_from_the_left_to_fit_the_context(planted_model):
    tokenizer = planted_model.tokenizer
    subject = tokenizer.token_string(planted_model.planted.knowledge[1].token_id)
    question = (
        "Setting aside every rumour you may have heard from travellers and merchants alike, "
        + QUESTION_TEMPLATE.format(subject=subject)
    )
    params = SamplingParams(temperature=1.0, rng_seed=3)
    budget = planted_model.prompt_budget(params)
    assert budget == planted_model.config.context_len - params.max_new_tokens

    full = AnswerPromptBuilder.encode_question(tokenizer, question, mode="uncertain")
    assert len(full) > budget
    fitted = AnswerPromptBuilder.encode_question(tokenizer, question, mode="uncertain", max_tokens=budget)
    assert len(fitted) == budget
    assert fitted[:2] == full[:2]
    assert fitted[-20:] == full[-20:]
    assert planted_model.planted.knowledge[1].token_id in fitted

    sample = planted_model.generate(fitted, params)
    assert len(sample.token_ids) <= params.max_new_tokens

    short = QUESTION_TEMPLATE.format(subject=subject)
    unchanged = AnswerPromptBuilder.encode_question(tokenizer, short, max_tokens=budget)
    assert unchanged == AnswerPromptBuilder.encode_question(tokenizer, short)
    with pytest.raises(ModelInputError):
        AnswerPromptBuilder.encode_question(tokenizer, question, max_tokens=40)
