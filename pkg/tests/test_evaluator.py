import json
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from seq2act import synth
from seq2act.actions import add_variable
from seq2act.errors import LineCountMismatch
from seq2act.evaluator import evaluate, exact_match, length_stats, lf_length, string_match
from seq2act.logical_form import print_lf

BORDER = "answer(A,(state(A),next_to(A,stateid(texas))))"
COUNT_GOLD = "answer(A,count(B,(state(B),next_to(C,B),const(C,stateid(iowa))),A))"
COUNT_PRED = "answer(A,count(B,state(B),A))"


def test_identical_and_renamed_forms_match(toy_schema):
    assert exact_match(BORDER, BORDER, toy_schema)
    assert exact_match(BORDER, "answer(B,(next_to(B,stateid(texas)),state(B)))", toy_schema)


def test_dropped_constraint_does_not_match(toy_schema):
    assert not exact_match(COUNT_PRED, COUNT_GOLD, toy_schema)
    assert not exact_match(BORDER, COUNT_GOLD, toy_schema)


def test_unparseable_prediction_is_wrong(toy_schema):
    assert not exact_match("answer(A,", BORDER, toy_schema)
    assert not string_match("answer(A,", BORDER, toy_schema)


def test_length_stats_by_hand():
    assert lf_length("answer(A,state(A))") == 9
    assert lf_length("answer(A,next_to(A,B))") == 11
    items = [("answer(A,state(A))", [add_variable("A")] * 5),
             ("answer(A,next_to(A,B))", [add_variable("A")] * 7)]
    assert length_stats(items) == (10.0, 6.0)
    assert length_stats([]) == (0.0, 0.0)


def test_toy_corpus_lengths(toy_train, toy_schema):
    lf_mean, act_mean = length_stats([(lf, None) for _, lf in toy_train], toy_schema)
    assert act_mean < lf_mean
    # regression values for the bundled corpus
    assert (lf_mean, act_mean) == pytest.approx((24.895, 9.615))


def test_gold_against_itself(toy_test, toy_schema):
    gold = [lf for _, lf in toy_test]
    report = evaluate(gold, gold, toy_schema)
    assert report.accuracy == 1.0 and report.string_accuracy == 1.0
    assert report.correct == report.total == len(gold)


def test_report_contents(toy_schema):
    report = evaluate([BORDER, None, COUNT_PRED], [BORDER, BORDER, COUNT_GOLD], toy_schema)
    assert (report.correct, report.total) == (1, 3)
    assert report.accuracy == pytest.approx(1 / 3)
    assert report.verdicts[1].error == "no prediction"
    data = json.loads(report.to_json())
    assert data["correct"] == 1 and len(data["verdicts"]) == 3
    assert "accuracy (graph match)" in report.to_table()


def test_broken_gold_is_reported(toy_schema):
    report = evaluate([BORDER], ["answer(A"], toy_schema)
    assert report.verdicts[0].error == "gold: SyntaxError" and report.correct == 0


def test_line_count_mismatch(toy_schema):
    with pytest.raises(LineCountMismatch):
        evaluate([BORDER], [BORDER, BORDER], toy_schema)


@settings(max_examples=60)
@given(st.integers(0, 10**9), st.integers(0, 10**9), st.integers(0, 10**9))
def test_exact_match_is_an_equivalence(toy_schema, s1, s2, s3):
    forms = [synth.random_lf(random.Random(s), toy_schema, max_depth=3) for s in (s1, s2, s3)]
    a, b, c = forms
    assert exact_match(a, a, toy_schema)
    assert exact_match(a, b, toy_schema) == exact_match(b, a, toy_schema)
    if exact_match(a, b, toy_schema) and exact_match(b, c, toy_schema):
        assert exact_match(a, c, toy_schema)
    # a form always matches its own canonical print
    assert exact_match(print_lf(a, toy_schema), a, toy_schema)
