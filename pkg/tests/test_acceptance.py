"""Acceptance suite: one test per numbered criterion.

Each test records a verdict; the pytest terminal summary (and running this
file directly) prints one PASS/FAIL line per criterion.

    pytest tests/test_acceptance.py
    python3 tests/test_acceptance.py
"""

from __future__ import annotations

import functools
import math
import os
import random
import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from oracles import CompletionOracle, LegalWalker, reachable_states  # noqa: E402
from test_decoder import brute_force, greedy, tiny  # noqa: E402
from seq2act import synth  # noqa: E402
from seq2act.actions import (  # noqa: E402
    EOS,
    add_edge_action,
    add_entity,
    add_type,
    add_variable,
    argument,
    build_graph,
    end_operation,
    start_operation,
)
from seq2act.controller import check_action  # noqa: E402
from seq2act.decoder import beam_search, parse  # noqa: E402
from seq2act.errors import CorruptCheckpoint, Seq2ActError  # noqa: E402
from seq2act.evaluator import exact_match, length_stats  # noqa: E402
from seq2act.graph import graphs_isomorphic, validate_wellformed  # noqa: E402
from seq2act.kernel import grad_check  # noqa: E402
from seq2act.logical_form import (  # noqa: E402
    actions_to_lf,
    format_lf,
    lf_to_actions,
    lf_to_graph,
    parse_lf,
    print_lf,
)
from seq2act.model import (  # noqa: E402
    ModelConfig,
    ModelParameters,
    decode_step,
    encode,
    init_decoder,
    init_params,
    loss_and_grads,
)
from seq2act.schema import load_schema, semantic_violations  # noqa: E402
from seq2act.trainer import (  # noqa: E402
    TrainSchedule,
    checkpoint_bytes,
    checkpoint_from_bytes,
    encode_example,
    load_checkpoint,
    preprocess,
    read_corpus,
    save_checkpoint,
    train,
)

RESULTS: dict[int, tuple[str, bool, str]] = {}

SMALL_SCHEMA = """
type state
type city
entity texas : state
entity austin : city
relation next_to(state, state)
relation loc(city, state)
operation count(arg-for, arg-return)
operation not()
"""


def criterion(number: int, title: str):
    def wrap(fn):
        @functools.wraps(fn)
        def run(*args, **kwargs):
            start = time.perf_counter()
            try:
                detail = fn(*args, **kwargs) or ""
            except AssertionError as exc:
                msg = str(exc).splitlines()[0] if str(exc) else "assertion failed"
                RESULTS[number] = (title, False, f"{msg} [{time.perf_counter() - start:.1f}s]")
                raise
            except Exception as exc:
                RESULTS[number] = (title, False, f"{type(exc).__name__}: {exc}")
                raise
            RESULTS[number] = (title, True, f"{detail} [{time.perf_counter() - start:.1f}s]")
        return run
    return wrap


def summary_lines() -> list[str]:
    lines = []
    for n in sorted(RESULTS):
        title, ok, detail = RESULTS[n]
        lines.append(f"criterion {n:>2} {'PASS' if ok else 'FAIL'}  {title}: {detail}")
    return lines


# --- shared data -------------------------------------------------------------

@functools.lru_cache(maxsize=None)
def toy_schema():
    return synth.toy_schema()


@functools.lru_cache(maxsize=None)
def conversion_set():
    schema = toy_schema()
    corpus = read_corpus(synth.TOY_TRAIN) + read_corpus(synth.TOY_TEST)
    rng = random.Random(2024)
    forms = [parse_lf(lf, schema) for _, lf in corpus]
    forms += [synth.random_lf(rng, schema, max_depth=4) for _ in range(1000)]
    return len(corpus), forms


# --- criteria ----------------------------------------------------------------

@criterion(1, "round-trip conversion")
def test_round_trip():
    n_corpus, forms = conversion_set()
    schema = toy_schema()
    start = time.perf_counter()
    bad = [f for f in forms
           if print_lf(actions_to_lf(lf_to_actions(f, schema), schema), schema) != print_lf(f, schema)]
    elapsed = time.perf_counter() - start
    assert n_corpus >= 200, f"corpus has only {n_corpus} examples"
    assert not bad, f"{len(bad)} of {len(forms)} forms changed"
    assert elapsed < 10, f"took {elapsed:.1f}s"
    return f"{len(forms)} forms ({n_corpus} corpus + 1000 random), all identical"


@criterion(2, "graph consistency")
def test_graph_consistency():
    _, forms = conversion_set()
    schema = toy_schema()
    bad = [f for f in forms
           if not graphs_isomorphic(build_graph(lf_to_actions(f, schema), schema), lf_to_graph(f, schema))]
    assert not bad, f"{len(bad)} of {len(forms)} graphs differ"
    return f"{len(forms)} isomorphic pairs"


def walk_vocab(schema, variables="ABCDEFGH"):
    roles = ("arg", "arg1_node", "arg2_node", "arg-for", "arg-in", "arg-return")
    labels = list(variables) + sorted(schema.entities)
    return ([add_variable(v) for v in variables]
            + [add_entity(e) for e in sorted(schema.entities)]
            + [add_type(t) for t in sorted(schema.types)]
            + [add_edge_action(r) for r in sorted(schema.relations)] + [add_edge_action("const")]
            + [start_operation(o) for o in sorted(schema.operations)]
            + [end_operation(o) for o in sorted(schema.operations)]
            + [argument(r, lab) for r in roles for lab in labels] + [EOS])


@criterion(3, "controller soundness")
def test_controller_soundness():
    schema = toy_schema()
    walker = LegalWalker(schema, walk_vocab(schema))
    start = time.perf_counter()
    finished = {}
    for level in ("c1", "c1c2"):
        rng = random.Random(7)
        done = 0
        for _ in range(10_000):
            seq, ok = walker.walk(rng, level, max_len=30)
            if not ok:
                continue
            done += 1
            g = build_graph(seq, schema)
            assert validate_wellformed(g) == [], f"{level} walk not well-formed: {seq}"
            if level == "c1c2":
                assert semantic_violations(g, schema) == [], f"schema violation: {seq}"
        finished[level] = done
    elapsed = time.perf_counter() - start
    assert elapsed < 30, f"took {elapsed:.1f}s"
    return (f"10000 walks per level; finished within 30 actions: c1 {finished['c1']}, "
            f"c1c2 {finished['c1c2']}; all valid")


@criterion(4, "controller oracle equivalence")
def test_controller_oracle():
    schema = load_schema(SMALL_SCHEMA)
    labels = ["A", "B", "texas"]
    vocab = ([add_variable("A"), add_variable("B"), add_entity("texas"), add_type("state"),
              add_edge_action("next_to"), add_edge_action("const"),
              start_operation("count"), end_operation("count"), start_operation("not"), end_operation("not")]
             + [argument(r, lab) for r in ("arg", "arg1_node", "arg2_node", "arg-for", "arg-return")
                for lab in labels] + [EOS])
    oracle = CompletionOracle(schema)

    def keep(state, a):
        return check_action(state, a, schema, "c1").allowed

    checked = states = 0
    for layer in reachable_states(schema, vocab, 8, keep):
        for state in layer:
            states += 1
            for a in vocab:
                checked += 1
                assert keep(state, a) == oracle.allows(state, a), f"disagree on {a} at {state.graph}"
    return f"{states} states, {checked} (state, action) pairs agree"


@criterion(5, "gradient correctness")
def test_gradients():
    schema = toy_schema()
    examples, vocabs = preprocess(read_corpus(synth.TOY_TRAIN)[:10], schema, min_count=1)
    cfg = ModelConfig(hidden_size=8, word_embed_dim=6, struct_embed_dim=4, sem_embed_dim=4,
                      n_words=len(vocabs.words), seed=5, init_scale=0.5)
    params = init_params(cfg, vocabs.actions)
    words, actions = encode_example(examples[3], vocabs)

    def fn(tensors):
        return loss_and_grads(ModelParameters(params.config, tensors, params.actions), words, actions)

    start = time.perf_counter()
    errors = grad_check(fn, params.tensors, samples=200, per_block=True)
    elapsed = time.perf_counter() - start
    worst = max(errors, key=errors.get)
    assert errors[worst] <= 1e-5, f"{worst}: relative error {errors[worst]:.2e}"
    assert elapsed < 60, f"took {elapsed:.1f}s"
    small = sorted(k for k, t in params.tensors.items() if t.size < 200)
    return (f"{len(errors)} blocks, max relative error {errors[worst]:.1e} ({worst}); "
            f"blocks under 200 entries checked exhaustively: {', '.join(small) or 'none'}")


@criterion(6, "attention and softmax normalization")
def test_normalization():
    worst = 0.0
    steps = 0
    rng = np.random.default_rng(11)
    schema = toy_schema()
    _, vocabs = preprocess(read_corpus(synth.TOY_TRAIN)[:30], schema)
    for seed in range(40):
        cfg = ModelConfig(hidden_size=int(rng.integers(4, 24)), word_embed_dim=8, struct_embed_dim=4,
                          sem_embed_dim=4, n_words=len(vocabs.words), seed=seed,
                          init_scale=float(rng.uniform(0.05, 2.0)))
        params = init_params(cfg, vocabs.actions)
        words = rng.integers(0, len(vocabs.words), size=int(rng.integers(1, 15)))
        enc = encode(params, words)
        state, prev = init_decoder(params, enc), None
        for _ in range(10):
            probs, state, attn = decode_step(params, enc, state, prev)
            worst = max(worst, abs(probs.sum() - 1), abs(attn.sum() - 1))
            prev = int(rng.integers(0, len(vocabs.actions)))
            steps += 1
    assert worst <= 1e-12, f"deviation {worst:.2e}"
    return f"{steps} decoder steps, max |sum - 1| = {worst:.1e}"


@criterion(7, "toy end-to-end accuracy")
def test_end_to_end():
    schema = toy_schema()
    train_set, test_set = read_corpus(synth.TOY_TRAIN), read_corpus(synth.TOY_TEST)
    start = time.perf_counter()
    examples, vocabs = preprocess(train_set, schema)
    model = train(ModelConfig(seed=0), examples, vocabs, TrainSchedule(), seed=0)
    accuracy = {}
    for level in ("c1c2", "none"):
        correct = 0
        for sentence, gold in test_set:
            try:
                result = parse(model, schema, sentence, beam_size=5, level=level)
            except Seq2ActError:
                continue
            if result.logical_form is not None and exact_match(result.logical_form, gold, schema):
                correct += 1
        accuracy[level] = correct / len(test_set)
    elapsed = time.perf_counter() - start
    assert len(train_set) == 200 and len(test_set) == 50
    assert accuracy["c1c2"] >= 0.95, f"c1c2 accuracy {accuracy['c1c2']:.3f}"
    assert accuracy["c1c2"] >= accuracy["none"], f"c1c2 {accuracy['c1c2']:.3f} < none {accuracy['none']:.3f}"
    assert elapsed < 600, f"took {elapsed:.0f}s"
    return f"accuracy c1c2 {accuracy['c1c2']:.3f}, none {accuracy['none']:.3f}"


@criterion(8, "beam argmax")
def test_beam_argmax():
    schema = load_schema(SMALL_SCHEMA)
    rng = random.Random(3)
    for seed in range(60):
        params = tiny(seed, schema)
        words = [rng.randrange(5) for _ in range(rng.randint(1, 4))]
        level = ("none", "c1")[seed % 2]
        assert len(params.actions) <= 4
        top = beam_search(params, schema, words, len(params.actions) ** 4, level, max_steps=4).completed[0]
        score, seq = brute_force(params, schema, words, level)
        assert top.actions == seq, f"seed {seed}: beam {top.actions} vs enumeration {seq}"
        assert math.isclose(top.score, score, abs_tol=1e-10)
        expected = greedy(params, schema, words, "c1", 12)
        got = beam_search(params, schema, words, 1, "c1", max_steps=12).completed
        assert (got[0].actions if got else None) == expected, f"seed {seed}: beam 1 differs from greedy"
    return "60 models: full beam equals enumeration argmax, beam 1 equals greedy"


@criterion(9, "compactness")
def test_compactness():
    schema = toy_schema()
    _, forms = conversion_set()
    parts = []
    corpora = {"toy train": read_corpus(synth.TOY_TRAIN), "toy test": read_corpus(synth.TOY_TEST)}
    for name, corpus in corpora.items():
        lf_mean, act_mean = length_stats([(lf, None) for _, lf in corpus], schema)
        assert act_mean < lf_mean, f"{name}: actions {act_mean:.2f} >= forms {lf_mean:.2f}"
        parts.append(f"{name} {lf_mean:.2f} -> {act_mean:.2f}")
    lf_mean, act_mean = length_stats([(format_lf(f), None) for f in forms[250:]], schema)
    assert act_mean < lf_mean
    parts.append(f"random {lf_mean:.2f} -> {act_mean:.2f}")
    geo = os.environ.get("SEQ2ACT_GEO_DATA")
    if geo:
        geo_schema = load_schema(Path(os.environ["SEQ2ACT_GEO_SCHEMA"]).read_text()) \
            if os.environ.get("SEQ2ACT_GEO_SCHEMA") else None
        lf_mean, act_mean = length_stats([(lf, None) for _, lf in read_corpus(geo)], geo_schema)
        reduction = 100 * (1 - act_mean / lf_mean)
        assert abs(reduction - 35.5) <= 10, f"Geo reduction {reduction:.1f}%"
        parts.append(f"Geo reduction {reduction:.1f}%")
    else:
        parts.append("Geo data not supplied (set SEQ2ACT_GEO_DATA)")
    return "; ".join(parts)


@criterion(10, "learning-rate schedule")
def test_lr_schedule():
    expected = [0.1] * 15 + [0.05] * 5 + [0.025] * 5 + [0.0125] * 5
    schema = toy_schema()
    examples, vocabs = preprocess(read_corpus(synth.TOY_TRAIN)[:2], schema, min_count=1)
    cfg = ModelConfig(hidden_size=4, word_embed_dim=3, struct_embed_dim=2, sem_embed_dim=2)
    model = train(cfg, examples, vocabs, TrainSchedule(30, 0.1))
    emitted = [m.lr for m in model.metrics]
    assert emitted == expected, f"trace {emitted}"
    return "30 emitted rates match exactly"


@criterion(11, "checkpoint integrity")
def test_checkpoint(tmp_path):
    schema = toy_schema()
    examples, vocabs = preprocess(read_corpus(synth.TOY_TRAIN)[:20], schema)
    cfg = ModelConfig(hidden_size=10, word_embed_dim=6, struct_embed_dim=3, sem_embed_dim=3)
    model = train(cfg, examples, vocabs, TrainSchedule(1, 0.1))
    first, second = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
    save_checkpoint(model, first)
    save_checkpoint(load_checkpoint(first), second)
    assert first.read_bytes() == second.read_bytes(), "save-load-save changed the bytes"
    data = checkpoint_bytes(model)
    rejected = 0
    rng = random.Random(0)
    damaged = [data[:n] for n in (0, 10, len(data) // 3, len(data) - 1)]
    for _ in range(20):
        b = bytearray(data)
        b[rng.randrange(len(b))] ^= 1 << rng.randrange(8)
        damaged.append(bytes(b))
    for blob in damaged:
        with pytest.raises(CorruptCheckpoint):
            checkpoint_from_bytes(blob)
        rejected += 1
    return f"bit-identical re-save; {rejected} damaged files rejected"


if __name__ == "__main__":
    import inspect
    import tempfile

    for name, fn in sorted(globals().items()):
        if name.startswith("test_") and callable(fn):
            try:
                if "tmp_path" in inspect.signature(fn).parameters:
                    with tempfile.TemporaryDirectory() as d:
                        fn(Path(d))
                else:
                    fn()
            except Exception:
                pass
    print("\n".join(summary_lines()))
    sys.exit(0 if all(ok for _, ok, _ in RESULTS.values()) else 1)
