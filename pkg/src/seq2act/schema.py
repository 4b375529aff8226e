"""Knowledge-base schema loading and the semantic-constraint tables.

Schema files are line oriented::

    # comment
    type state
    entity texas : state
    alias texas "lone star state"
    relation next_to(state, state)
    operation count(arg-for, arg-return)
    operation not()

``alias`` lines are optional extra surface strings used for entity
mention detection; every entity is also matched by its name with
underscores read as spaces.
"""

from __future__ import annotations

import itertools
import re
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

from .errors import DuplicateDeclaration, SchemaParseError, UndeclaredType

CONST_RELATION = "const"

PLACEHOLDER_RE = re.compile(r"^<([A-Za-z_][A-Za-z0-9_]*):(\d+)>$")

# Used when no schema is bound (parsing and conversion of bare logical forms).
DEFAULT_OPERATIONS: dict[str, tuple[str, ...]] = {
    "count": ("arg-for", "arg-return"),
    "sum": ("arg-for", "arg-in", "arg-return"),
    "most": ("arg-for", "arg-for"),
    "fewest": ("arg-for", "arg-for"),
    "largest": ("arg-for",),
    "smallest": ("arg-for",),
    "highest": ("arg-for",),
    "lowest": ("arg-for",),
    "argmax": ("arg-for", "arg-in"),
    "argmin": ("arg-for", "arg-in"),
    "not": (),
}

_NAME = r"[A-Za-z_][A-Za-z0-9_]*"
_ROLE = r"[A-Za-z][A-Za-z0-9_-]*"
_TYPE_LINE = re.compile(rf"^type\s+({_NAME})$")
_ENTITY_LINE = re.compile(rf"^entity\s+({_NAME})\s*:\s*({_NAME})$")
_ALIAS_LINE = re.compile(rf'^alias\s+({_NAME})\s+"([^"]+)"$')
_RELATION_LINE = re.compile(rf"^relation\s+({_NAME})\s*\(\s*({_NAME})\s*,\s*({_NAME})\s*\)$")
_OPERATION_LINE = re.compile(rf"^operation\s+({_NAME})\s*(?:\(\s*(.*?)\s*\))?$")


def placeholder(type_name: str, index: int) -> str:
    return f"<{type_name}:{index}>"


def parse_placeholder(label: str) -> tuple[str, int] | None:
    m = PLACEHOLDER_RE.match(label)
    if m is None:
        return None
    return m.group(1), int(m.group(2))


@dataclass(frozen=True)
class KBSchema:
    types: frozenset[str]
    entities: dict[str, str]
    relations: dict[str, tuple[str, str]]
    operations: dict[str, tuple[str, ...]]
    aliases: dict[str, str] = field(default_factory=dict)

    def entity_type(self, label: str) -> str | None:
        """Schema type of an entity name or ``<type:k>`` placeholder."""
        if label in self.entities:
            return self.entities[label]
        ph = parse_placeholder(label)
        if ph is not None and ph[0] in self.types:
            return ph[0]
        return None

    def has_entity(self, label: str) -> bool:
        return self.entity_type(label) is not None

    def has_relation(self, name: str) -> bool:
        return name == CONST_RELATION or name in self.relations

    def relation_signature(self, name: str) -> tuple[str, str] | None:
        """Declared (arg1, arg2) types; ``None`` for the untyped built-in ``const``."""
        return self.relations.get(name)

    def operation_roles(self, op: str) -> tuple[str, ...]:
        return self.operations[op]

    def surface_forms(self) -> dict[str, str]:
        """Lower-cased surface string -> entity name, for mention detection."""
        forms = {name.replace("_", " ").lower(): name for name in self.entities}
        for surface, name in self.aliases.items():
            forms[surface.lower()] = name
        return forms


@dataclass(frozen=True)
class SemanticConstraintTable:
    selectional_preference: dict[str, tuple[str, str]]
    disjoint_types: frozenset[tuple[str, str]]

    def conflicting(self, t1: str, t2: str) -> bool:
        return (min(t1, t2), max(t1, t2)) in self.disjoint_types


def load_schema(text: str) -> KBSchema:
    types: list[str] = []
    entities: dict[str, str] = {}
    relations: dict[str, tuple[str, str]] = {}
    operations: dict[str, tuple[str, ...]] = {}
    aliases: dict[str, str] = {}
    pending_refs: list[tuple[int, str]] = []
    seen: dict[tuple[str, str], int] = {}

    def declare(kind: str, name: str, lineno: int):
        key = (kind, name)
        if key in seen:
            raise DuplicateDeclaration(
                f"line {lineno}: {kind} {name!r} already declared on line {seen[key]}"
            )
        seen[key] = lineno

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if m := _TYPE_LINE.match(line):
            declare("type", m.group(1), lineno)
            types.append(m.group(1))
        elif m := _ENTITY_LINE.match(line):
            declare("entity", m.group(1), lineno)
            entities[m.group(1)] = m.group(2)
            pending_refs.append((lineno, m.group(2)))
        elif m := _ALIAS_LINE.match(line):
            declare("alias", m.group(2).lower(), lineno)
            aliases[m.group(2)] = m.group(1)
        elif m := _RELATION_LINE.match(line):
            declare("relation", m.group(1), lineno)
            relations[m.group(1)] = (m.group(2), m.group(3))
            pending_refs.extend([(lineno, m.group(2)), (lineno, m.group(3))])
        elif m := _OPERATION_LINE.match(line):
            declare("operation", m.group(1), lineno)
            roles_text = m.group(2) or ""
            roles = tuple(r.strip() for r in roles_text.split(",")) if roles_text else ()
            for role in roles:
                if not re.fullmatch(_ROLE, role):
                    raise SchemaParseError(f"line {lineno}: bad role name {role!r}")
            operations[m.group(1)] = roles
        else:
            raise SchemaParseError(f"line {lineno}: cannot parse {raw!r}")

    declared = set(types)
    for lineno, t in pending_refs:
        if t not in declared:
            raise UndeclaredType(f"line {lineno}: type {t!r} is not declared")
    for surface, name in aliases.items():
        if name not in entities:
            raise SchemaParseError(f"alias {surface!r} refers to unknown entity {name!r}")
    return KBSchema(frozenset(types), entities, relations, operations, aliases)


def load_schema_file(path: str | Path) -> KBSchema:
    return load_schema(Path(path).read_text(encoding="utf-8"))


def extract_constraints(schema: KBSchema) -> SemanticConstraintTable:
    pairs = frozenset(
        (a, b) for a, b in itertools.combinations(sorted(schema.types), 2)
    )
    return SemanticConstraintTable(dict(schema.relations), pairs)


def semantic_violations(graph, schema: KBSchema) -> list[tuple[str, str]]:
    """Post-hoc schema check of a finished graph.

    Collects every type requirement placed on each node (attachments,
    entity types, relation signatures, equality through ``const``) and
    reports pairs of requirements that disagree. Returns
    ``(rule, detail)`` tuples with rule ``SelectionalPreference`` when a
    relation signature is involved and ``TypeConflict`` otherwise.
    """
    from .graph import NodeKind

    # const edges identify nodes; group them first
    parent = {n.id: n.id for n in graph.nodes}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for e in graph.edges:
        if e.relation == CONST_RELATION and schema.relation_signature(e.relation) is None:
            parent[find(e.arg1)] = find(e.arg2)

    requirements: dict[int, list[tuple[str, bool, str]]] = defaultdict(list)
    by_id = {n.id: n for n in graph.nodes}
    for n in graph.nodes:
        if n.kind is NodeKind.ENTITY:
            t = n.entity_type or schema.entity_type(n.label)
            if t is not None:
                requirements[find(n.id)].append((t, False, f"entity {n.label}"))
    for att in graph.type_attachments:
        t = by_id[att.type_node].label
        requirements[find(att.constrained_node)].append((t, False, f"type {t}"))
    for e in graph.edges:
        sig = schema.relation_signature(e.relation)
        if sig is None:
            continue
        requirements[find(e.arg1)].append((sig[0], True, f"{e.relation} arg1"))
        requirements[find(e.arg2)].append((sig[1], True, f"{e.relation} arg2"))

    out = []
    for root in sorted(requirements):
        reqs = requirements[root]
        for (t1, rel1, why1), (t2, rel2, why2) in itertools.combinations(reqs, 2):
            if t1 == t2:
                continue
            rule = "SelectionalPreference" if rel1 or rel2 else "TypeConflict"
            out.append((rule, f"node {by_id[root].label}: {why1} ({t1}) vs {why2} ({t2})"))
    return out
