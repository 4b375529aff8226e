"""Legality filter applied to candidate actions during decoding.

Three levels are supported. ``NONE`` only rejects what the interpreter
itself would reject. ``C1`` additionally rejects any action after which
no sequence of further actions can reach a complete, well-formed graph
(cycles, empty scopes, arguments that cannot be supplied, premature end
of sequence). ``C1C2`` adds schema typing: selectional preferences of
relations and the rule that a node carries at most one type.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from enum import Enum
from typing import Iterable

from .actions import (
    ADD_EDGE,
    ADD_ENTITY,
    ADD_TYPE,
    ADD_VARIABLE,
    ARG2,
    END_OPERATION,
    EOS_TEXT,
    START_OPERATION,
    Action,
    PartialGraphState,
    is_complete,
    operation_roles,
)
from .errors import UnknownLabel
from .graph import NodeKind, validate_wellformed
from .schema import KBSchema


class ConstraintLevel(Enum):
    NONE = "none"
    C1 = "c1"
    C1C2 = "c1c2"

    @classmethod
    def parse(cls, text: str | ConstraintLevel | None) -> ConstraintLevel:
        if text is None:
            return cls.NONE
        if isinstance(text, cls):
            return text
        key = str(text).lower().replace("+", "").replace("plus", "")
        try:
            return cls(key)
        except ValueError:
            raise ValueError(f"unknown constraint level {text!r}") from None


@dataclass(frozen=True)
class LegalityVerdict:
    allowed: bool
    violated_rule: str | None = None

    def __bool__(self) -> bool:
        return self.allowed


ALLOWED = LegalityVerdict(True)


_DENIALS: dict[str, LegalityVerdict] = {}


def _deny(rule: str) -> LegalityVerdict:
    verdict = _DENIALS.get(rule)
    if verdict is None:
        verdict = _DENIALS[rule] = LegalityVerdict(False, rule)
    return verdict


class _Analysis:
    """Per-state facts shared by every candidate check."""

    def __init__(self, state: PartialGraphState, schema: KBSchema | None):
        g = state.graph
        self.state = state
        parent = list(range(len(g.nodes)))

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for e in g.edges:
            parent[find(e.arg1)] = find(e.arg2)
        self.comp = [find(n) for n in range(len(g.nodes))]
        self.symbol_nodes = sorted(state.symbols.values())
        self.variables = [n for n in self.symbol_nodes if g.nodes[n].kind is NodeKind.VARIABLE]
        self.attached: dict[int, set[str]] = {}
        for a in g.type_attachments:
            self.attached.setdefault(a.constrained_node, set()).add(g.nodes[a.type_node].label)
        self.schema = schema
        self.memo: dict = {}

    @cached_property
    def n_components(self) -> int:
        return len({self.comp[n] for n in self.symbol_nodes})

    @cached_property
    def types(self) -> dict[int, frozenset[str]] | None:
        # only the typed level needs these
        return self._infer_types(self.state, self.schema) if self.schema is not None else None

    @staticmethod
    def _infer_types(state: PartialGraphState, schema: KBSchema) -> dict[int, frozenset[str]]:
        # const-like edges (no declared signature) identify their endpoints
        g = state.graph
        cls = list(range(len(g.nodes)))

        def find(x):
            while cls[x] != x:
                cls[x] = cls[cls[x]]
                x = cls[x]
            return x

        for e in g.edges:
            if schema.relation_signature(e.relation) is None:
                cls[find(e.arg1)] = find(e.arg2)
        acc: dict[int, set[str]] = {}
        for n in g.nodes:
            if n.kind is NodeKind.ENTITY:
                t = n.entity_type or schema.entity_type(n.label)
                if t is not None:
                    acc.setdefault(find(n.id), set()).add(t)
        for a in g.type_attachments:
            acc.setdefault(find(a.constrained_node), set()).add(g.nodes[a.type_node].label)
        for e in g.edges:
            sig = schema.relation_signature(e.relation)
            if sig is not None:
                acc.setdefault(find(e.arg1), set()).add(sig[0])
                acc.setdefault(find(e.arg2), set()).add(sig[1])
        return {n.id: frozenset(acc.get(find(n.id), ())) for n in g.nodes}

    def compatible(self, n: int, t: str) -> bool:
        return self.types[n] <= {t}

    def can_merge(self, x: int, y: int) -> bool:
        return len(self.types[x] | self.types[y]) <= 1

    def edge_ok(self, x: int, y: int, rel: str, schema: KBSchema | None, typed: bool) -> str | None:
        """Rule violated by an edge rel(x, y), or None."""
        if x == y:
            return "SelfLoop"
        if self.comp[x] == self.comp[y]:
            return "Cyclic"
        if typed:
            sig = schema.relation_signature(rel)
            if sig is None:
                if not self.can_merge(x, y):
                    return "TypeConflict"
            elif not (self.compatible(x, sig[0]) and self.compatible(y, sig[1])):
                return "SelectionalPreference"
        return None

    def has_partner(self, x: int, rel: str, schema, typed: bool) -> bool:
        if not typed:
            # untyped: any symbol node in another component will do
            return self.n_components > 1
        sig = schema.relation_signature(rel)
        if sig is not None:
            if not self.compatible(x, sig[0]):
                return False
            comps = self.components_accepting(sig[1])
            return len(comps) > 1 or (bool(comps) and self.comp[x] not in comps)
        key = ("partner", x, rel)
        if key not in self.memo:
            self.memo[key] = any(
                self.edge_ok(x, y, rel, schema, typed) is None for y in self.symbol_nodes
            )
        return self.memo[key]

    def components_accepting(self, t: str) -> set[int]:
        key = ("accepting", t)
        if key not in self.memo:
            self.memo[key] = {self.comp[y] for y in self.symbol_nodes if self.compatible(y, t)}
        return self.memo[key]

    def has_edge_slot(self, rel: str, schema, typed: bool) -> str | None:
        key = ("slot", rel, typed)
        if key not in self.memo:
            if any(self.has_partner(x, rel, schema, typed) for x in self.symbol_nodes):
                rule = None
            elif typed and any(self.has_partner(x, rel, schema, False) for x in self.symbol_nodes):
                rule = "SelectionalPreference" if schema.relation_signature(rel) else "TypeConflict"
            else:
                rule = "Cyclic"
            self.memo[key] = rule
        return self.memo[key]

    def type_target(self, n: int, t: str, typed: bool) -> str | None:
        if t in self.attached.get(n, ()):
            return "DuplicateType"
        if typed and not self.compatible(n, t):
            return "TypeConflict"
        return None

    def has_type_target(self, t: str, typed: bool) -> str | None:
        key = ("type", t, typed)
        if key not in self.memo:
            rules = [self.type_target(n, t, typed) for n in self.symbol_nodes]
            if not rules or any(r is None for r in rules):
                self.memo[key] = None if rules else "DuplicateType"
            else:
                self.memo[key] = "TypeConflict" if "TypeConflict" in rules else "DuplicateType"
        return self.memo[key]


def _analysis(state: PartialGraphState, schema: KBSchema | None) -> _Analysis:
    key = ("analysis", id(schema))
    cached = state.cache.get(key)
    if cached is None:
        cached = state.cache[key] = _Analysis(state, schema)
    return cached


def hard_error(state: PartialGraphState, action: Action, schema: KBSchema | None) -> str | None:
    """Error code apply_action would raise for ``action``, without running it."""
    if action.structure == EOS_TEXT:
        if state.pending is not None:
            return "ArityViolation"
        if state.open_operations:
            return "UnbalancedOperation"
        return None
    symbols = state.symbols
    graph = state.graph
    if action.is_argument:
        p = state.pending
        if p is None:
            return "OrphanArgument"
        if action.role != p.next_role:
            return "ArityViolation"
        node = symbols.get(action.label)
        if node is None:
            return "UnknownLabel"
        main = p.main.structure
        if main == ADD_EDGE and action.role == ARG2 and symbols[p.collected[0][1]] == node:
            return "SelfLoop"
        if main == END_OPERATION and graph.nodes[node].kind is not NodeKind.VARIABLE:
            return "ArityViolation"
        if main == ADD_TYPE and p.main.semantic in _analysis(state, schema).attached.get(node, ()):
            return "DuplicateType"
        return None
    if state.pending is not None:
        return "ArityViolation"
    kind, label = action.structure, action.semantic
    if kind == ADD_VARIABLE:
        return None if label == state.next_variable() else "NonCanonicalVariable"
    if kind == ADD_ENTITY:
        if label in symbols:
            return "DuplicateNode"
        if schema is not None and schema.entity_type(label) is None:
            return "UnknownEntity"
        return None
    if kind == ADD_TYPE:
        return None if schema is None or label in schema.types else "UnknownLabel"
    if kind == ADD_EDGE:
        return None if schema is None or schema.has_relation(label) else "UnknownLabel"
    if kind in (START_OPERATION, END_OPERATION):
        if kind == END_OPERATION:
            if not state.open_operations or state.open_operations[-1].label != label:
                return "UnbalancedOperation"
        try:
            operation_roles(label, schema)
        except UnknownLabel:
            return "UnknownLabel"
        return None
    return "UnknownLabel"


def _incomplete_rule(state: PartialGraphState) -> str:
    if state.pending is not None:
        return "ArityViolation"
    if state.open_operations:
        return "UnbalancedOperation"
    if state.graph.return_node is None or not state.graph.elements:
        return "Incomplete"
    violations = validate_wellformed(state.graph)
    return violations[0].rule if violations else "Incomplete"


def check_action(state: PartialGraphState, action: Action, schema: KBSchema | None = None,
                 level: ConstraintLevel | str = ConstraintLevel.C1) -> LegalityVerdict:
    level = ConstraintLevel.parse(level)
    if schema is None:
        schema = state.schema
    rule = hard_error(state, action, schema)
    if rule is not None:
        return _deny(rule)
    if level is ConstraintLevel.NONE:
        return ALLOWED
    typed = level is ConstraintLevel.C1C2 and schema is not None

    if action.structure == EOS_TEXT:
        return ALLOWED if is_complete(state) else _deny(_incomplete_rule(state))

    info = _analysis(state, schema)
    kind, label = action.structure, action.semantic
    if action.is_argument:
        p = state.pending
        node = state.symbols[label]
        main = p.main.structure
        if main == ADD_TYPE:
            rule = info.type_target(node, p.main.semantic, typed)
        elif main == ADD_EDGE:
            rel = p.main.semantic
            if action.role == ARG2:
                rule = info.edge_ok(state.symbols[p.collected[0][1]], node, rel, schema, typed)
            else:
                rule = None
                sig = schema.relation_signature(rel) if typed else None
                if sig is not None and not info.compatible(node, sig[0]):
                    rule = "SelectionalPreference"
                elif not info.has_partner(node, rel, schema, typed):
                    rule = ("Cyclic" if not info.has_partner(node, rel, schema, False)
                            else "SelectionalPreference" if sig else "TypeConflict")
        else:
            rule = None
        return ALLOWED if rule is None else _deny(rule)

    if kind == ADD_TYPE:
        rule = info.has_type_target(label, typed)
    elif kind == ADD_EDGE:
        rule = info.has_edge_slot(label, schema, typed)
    elif kind == END_OPERATION:
        frame = state.open_operations[-1]
        if not frame.children:
            rule = "EmptyScope"
        elif operation_roles(label, schema) and not info.variables:
            rule = "ArityViolation"
        else:
            rule = None
    else:
        rule = None
    return ALLOWED if rule is None else _deny(rule)


def legal_actions(state: PartialGraphState, vocabulary: Iterable[Action],
                  schema: KBSchema | None = None,
                  level: ConstraintLevel | str = ConstraintLevel.C1) -> list[Action]:
    return [a for a in vocabulary if check_action(state, a, schema, level).allowed]


def explain(state: PartialGraphState, vocabulary: Iterable[Action],
            schema: KBSchema | None = None,
            level: ConstraintLevel | str = ConstraintLevel.C1) -> dict[str, str]:
    """Action text -> violated rule for every rejected candidate."""
    out = {}
    for a in vocabulary:
        v = check_action(state, a, schema, level)
        if not v.allowed:
            out[str(a)] = v.violated_rule
    return out

