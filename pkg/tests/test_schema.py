import itertools

import pytest
from hypothesis import given
from hypothesis import strategies as st

from seq2act import synth
from seq2act.errors import DuplicateDeclaration, SchemaParseError, UndeclaredType, UnknownSymbol
from seq2act.logical_form import iter_terms, parse_lf
from seq2act.schema import (
    extract_constraints,
    load_schema,
    parse_placeholder,
    placeholder,
)


def test_minimal_schema():
    s = load_schema("type state\nrelation next_to(state, state)")
    assert s.relations == {"next_to": ("state", "state")}
    assert s.relation_signature("next_to") == ("state", "state")


def test_undeclared_type():
    with pytest.raises(UndeclaredType):
        load_schema("relation next_to(state, state)")
    with pytest.raises(UndeclaredType):
        load_schema("entity texas : state")


def test_duplicate_declaration():
    with pytest.raises(DuplicateDeclaration):
        load_schema("type state\nrelation next_to(state, state)\nrelation next_to(state, state)")


def test_parse_errors():
    with pytest.raises(SchemaParseError) as info:
        load_schema("type state\nfunction f(state)")
    assert info.value.code == "ParseError"
    with pytest.raises(SchemaParseError):
        load_schema('type state\nalias ghost "boo"')


def test_comments_and_operations():
    s = load_schema("# geo\ntype state  # trailing\noperation count(arg-for, arg-return)\noperation not()\n")
    assert s.operations == {"count": ("arg-for", "arg-return"), "not": ()}


def test_constraints_from_toy_schema(toy_schema):
    table = extract_constraints(toy_schema)
    assert table.selectional_preference["next_to"] == ("state", "state")
    assert table.conflicting("city", "state") and table.conflicting("state", "city")


def test_single_type_has_no_conflicts():
    assert extract_constraints(load_schema("type state")).disjoint_types == frozenset()


@given(st.sets(st.sampled_from(["a", "b", "c", "d", "e", "f"]), min_size=1))
def test_every_distinct_pair_conflicts(types):
    s = load_schema("\n".join(f"type {t}" for t in sorted(types)))
    table = extract_constraints(s)
    assert len(table.disjoint_types) == len(types) * (len(types) - 1) // 2
    for a, b in itertools.permutations(types, 2):
        assert table.conflicting(a, b)
    assert extract_constraints(s) == table


def test_placeholders_are_typed(toy_schema):
    assert placeholder("state", 0) == "<state:0>"
    assert parse_placeholder("<state:3>") == ("state", 3)
    assert parse_placeholder("texas") is None
    assert toy_schema.entity_type("<state:3>") == "state"
    assert toy_schema.entity_type("<planet:0>") is None


def test_aliases_are_surface_forms(toy_schema):
    forms = toy_schema.surface_forms()
    assert forms["lone star state"] == "texas"
    assert forms["new york"] == "new_york"


def test_every_corpus_symbol_resolves(toy_train, toy_test):
    schema = synth.toy_schema()
    for _, text in toy_train + toy_test:
        lf = parse_lf(text, schema, strict=True)
        assert list(iter_terms(lf.body))


def test_strict_mode_rejects_foreign_relation(toy_schema):
    with pytest.raises(UnknownSymbol):
        parse_lf("answer(A,(river(A),flows_into(A,stateid(texas))))", toy_schema, strict=True)
