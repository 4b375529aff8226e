import itertools
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from seq2act.actions import (
    EOS,
    PartialGraphState,
    add_edge_action,
    add_entity,
    add_type,
    add_variable,
    apply_action,
    argument,
    build_graph,
    fold,
)
from seq2act.controller import check_action
from seq2act.decoder import BeamItem, _Ranker, beam_search, expand, parse
from seq2act.errors import EmptySentence, NoCompleteParse, Seq2ActError
from seq2act.graph import validate_wellformed
from seq2act.logical_form import actions_to_lf, print_lf
from seq2act.model import (
    ActionVocabulary,
    ModelConfig,
    decode_step,
    encode,
    init_decoder,
    init_params,
    sequence_log_prob,
)
from seq2act.schema import semantic_violations
from seq2act.trainer import TrainSchedule, preprocess, substitute_lf, train

TINY_ACTIONS = [add_variable("A"), add_type("state"), argument("arg", "A")]


def tiny(seed, schema):
    cfg = ModelConfig(hidden_size=6, word_embed_dim=4, struct_embed_dim=3, sem_embed_dim=3,
                      n_words=5, seed=seed, init_scale=1.5)
    return init_params(cfg, ActionVocabulary(TINY_ACTIONS))


def _none_legal(state, action):
    # independent of the controller: ask the interpreter
    if action == EOS:
        return state.pending is None and not state.open_operations
    try:
        apply_action(state, action)
        return True
    except Seq2ActError:
        return False


def brute_force(params, schema, words, level, max_len=4):
    vocab = params.actions.actions
    best = None
    for n in range(max_len):
        for body in itertools.product(range(1, len(vocab)), repeat=n):
            seq = list(body) + [0]
            state, ok = PartialGraphState.empty(schema), True
            for a in seq:
                action = vocab[a]
                legal = (_none_legal(state, action) if level == "none"
                         else check_action(state, action, schema, level).allowed)
                if not legal:
                    ok = False
                    break
                if action != EOS:
                    state = apply_action(state, action)
            if ok:
                score = sequence_log_prob(params, words, seq)
                if best is None or score > best[0]:
                    best = (score, tuple(seq))
    return best


@settings(max_examples=40)
@given(st.integers(0, 2**31), st.lists(st.integers(0, 4), min_size=1, max_size=4),
       st.sampled_from(["none", "c1"]))
def test_full_beam_finds_the_enumerated_argmax(small_schema, seed, words, level):
    params = tiny(seed, small_schema)
    width = len(params.actions) ** 4
    outcome = beam_search(params, small_schema, words, width, level, max_steps=4)
    expected = brute_force(params, small_schema, words, level)
    top = outcome.completed[0]
    assert top.actions == expected[1]
    assert top.score == pytest.approx(expected[0], abs=1e-10)


def greedy(params, schema, words, level, max_steps):
    vocab = params.actions.actions
    texts = [str(a) for a in vocab]
    enc = encode(params, words)
    probs, dec, _ = decode_step(params, enc, init_decoder(params, enc))
    state, seq = PartialGraphState.empty(schema), []
    for _ in range(max_steps):
        order = sorted(range(len(vocab)), key=lambda a: (-probs[a], texts[a]))
        a = next(a for a in order if check_action(state, vocab[a], schema, level).allowed)
        seq.append(a)
        if a == 0:
            return tuple(seq)
        state = apply_action(state, vocab[a])
        probs, dec, _ = decode_step(params, enc, dec, a)
    return None


@settings(max_examples=40)
@given(st.integers(0, 2**31), st.lists(st.integers(0, 4), min_size=1, max_size=4))
def test_beam_one_is_greedy(small_schema, seed, words):
    params = tiny(seed, small_schema)
    outcome = beam_search(params, small_schema, words, 1, "c1", max_steps=12)
    expected = greedy(params, small_schema, words, "c1", 12)
    if expected is None:
        assert outcome.completed == []
    else:
        assert outcome.completed[0].actions == expected


# --- expand ------------------------------------------------------------------

class _Verdict:
    def __init__(self, ok):
        self.allowed = ok
        self.violated_rule = None if ok else "Rule"


_Yes, _No = _Verdict(True), _Verdict(False)


def _item(schema, state=None):
    return BeamItem((), -1.0, None, state or PartialGraphState.empty(schema), ())


def test_expand_without_constraints_is_top_k(small_schema):
    params = tiny(0, small_schema)
    logp = np.log(np.array([0.1, 0.4, 0.2, 0.3]))
    out = expand(_item(small_schema), logp, lambda a: _Yes, 3, _Ranker(params))
    assert [a for _, a in out] == [1, 3, 2]
    assert [s for s, _ in out] == pytest.approx([-1.0 + v for v in logp[[1, 3, 2]]])
    assert expand(_item(small_schema), logp, lambda a: _No, 3, _Ranker(params)) == []


def test_expand_drops_the_self_loop(small_schema):
    acts = [add_variable("A"), add_variable("B"), add_entity("texas"), add_type("state"),
            add_edge_action("next_to")] + [argument(r, x) for r in ("arg", "arg1_node", "arg2_node")
                                           for x in ("A", "B", "texas")]
    cfg = ModelConfig(hidden_size=4, word_embed_dim=3, struct_embed_dim=2, sem_embed_dim=2, n_words=3)
    params = init_params(cfg, ActionVocabulary(acts))
    vocab = params.actions.actions
    state = fold([add_variable("A"), add_type("state"), argument("arg", "A"), add_entity("texas"),
                  add_variable("B"), add_edge_action("next_to"), argument("arg1_node", "A")],
                 small_schema)
    logp = np.full(len(vocab), -10.0)
    self_loop = params.actions[argument("arg2_node", "A")]
    logp[self_loop] = -0.01
    filtered = {}
    out = expand(_item(small_schema, state), logp,
                 lambda a: check_action(state, vocab[a], small_schema, "c1c2"), 5, _Ranker(params),
                 filtered=filtered)
    assert self_loop not in [a for _, a in out]
    assert {str(vocab[a]) for _, a in out} == {"arg2_node:B", "arg2_node:texas"}
    assert filtered["arg2_node:A"] == "SelfLoop"


# --- a small trained model ---------------------------------------------------

@pytest.fixture(scope="module")
def toy_model(toy_schema, toy_train):
    examples, vocabs = preprocess(toy_train, toy_schema)
    cfg = ModelConfig(hidden_size=24, word_embed_dim=16, struct_embed_dim=8, sem_embed_dim=8)
    return train(cfg, examples, vocabs, TrainSchedule(2, 0.05), seed=1)


def random_sentences(toy_train, n, seed):
    rng = random.Random(seed)
    words = sorted({w for u, _ in toy_train for w in u.split()})
    return [" ".join(rng.choice(words) for _ in range(rng.randint(1, 9))) for _ in range(n)]


@pytest.mark.slow
def test_constrained_parses_are_valid(toy_model, toy_schema, toy_train):
    for level in ("c1", "c1c2"):
        for sentence in random_sentences(toy_train, 1000, seed=len(level)):
            result = parse(toy_model, toy_schema, sentence, beam_size=5, level=level)
            assert result.error is None, (sentence, result.error)
            assert validate_wellformed(build_graph(result.actions, toy_schema)) == []
            if level == "c1c2":
                assert semantic_violations(result.graph, toy_schema) == []


def test_reported_score_is_the_sequence_log_prob(toy_model, toy_schema, toy_train):
    vocabs_words = toy_model.words
    for sentence in random_sentences(toy_train, 30, seed=9):
        ids = vocabs_words.encode(sentence.split())
        outcome = beam_search(toy_model.params, toy_schema, ids, 5, "c1c2", 3 * toy_model.max_action_len)
        for item in outcome.completed:
            assert item.score == pytest.approx(sequence_log_prob(toy_model.params, ids, item.actions),
                                               abs=1e-10)


def test_result_fields_agree(toy_model, toy_schema):
    result = parse(toy_model, toy_schema, "which states border texas", level="c1c2")
    lf = substitute_lf(actions_to_lf(result.actions, toy_schema), result.substitutions)
    assert result.logical_form == print_lf(lf, toy_schema)
    assert "<state:0>" not in result.logical_form
    assert len(result.attention) == len(result.actions) + 1
    assert all(abs(a.sum() - 1) < 1e-12 for a in result.attention)


@settings(max_examples=30)
@given(st.integers(0, 10**6))
def test_wider_beams_never_score_lower(toy_model, toy_schema, toy_train, seed):
    (sentence,) = random_sentences(toy_train, 1, seed)
    ids = toy_model.words.encode(sentence.split())
    best = []
    for k in (1, 2, 3, 5, 8):
        outcome = beam_search(toy_model.params, toy_schema, ids, k, "c1c2", 3 * toy_model.max_action_len)
        best.append(outcome.completed[0].score)
    assert all(b >= a - 1e-12 for a, b in zip(best, best[1:]))


def test_explain_reports_filtered_actions(toy_model, toy_schema):
    result = parse(toy_model, toy_schema, "which states border texas", level="c1c2", explain=True)
    assert result.diagnostics and result.diagnostics[0]["step"] == 0
    first = result.diagnostics[0]["filtered"]
    assert first["<eos>"] == "Incomplete"
    assert all(k.split(":")[0] not in ("arg", "arg1_node") or v == "OrphanArgument" for k, v in first.items())


def test_error_cases(toy_model, toy_schema):
    with pytest.raises(EmptySentence):
        parse(toy_model, toy_schema, "   ")
    with pytest.raises(NoCompleteParse):
        parse(toy_model, toy_schema, "which states border texas", level="c1", max_steps=1)
