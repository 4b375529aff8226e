"""Prolog/FunQL-style logical forms and their conversion to and from
semantic graphs and action sequences.

Grammar (whitespace between tokens is ignored)::

    lf        ::= "answer" "(" VAR "," body ")"
    body      ::= term | "(" term ("," term)* ")"
    term      ::= TYPE "(" arg ")"                      type predicate
                | REL "(" arg "," arg ")"               relation / const
                | OP "(" VAR* body [VAR] ")"            operator, see below
                | "(" term ("," term)* ")"              nested conjunction, flattened
    arg       ::= VAR | ENTITY
    ENTITY    ::= TYPE "id" "(" NAME ")"                e.g. stateid(texas)
    VAR       ::= [A-Z][0-9]*
    NAME      ::= [A-Za-z0-9_]+ | "<" TYPE ":" DIGITS ">"

An operator with roles ``r1..rk`` is written ``op(v1, .., vk-1, body, vk)``
when its last role is ``arg-return`` (``count(B, body, A)``),
``op(v1, .., vk, body)`` otherwise (``most(A, B, body)``), and
``op(body)`` when it has no roles (``not``).
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Union

from .actions import (
    ARG1,
    ARG2,
    TYPE_ARG,
    Action,
    add_edge_action,
    add_entity,
    add_type,
    add_variable,
    argument,
    build_graph,
    end_operation,
    start_operation,
    variable_label,
)
from .errors import LFSyntaxError, NotConvertible, Seq2ActError, UnboundVariable, UnknownSymbol
from .graph import (
    ElementRef,
    NodeId,
    NodeKind,
    SemanticGraph,
    add_edge,
    add_node,
    add_scope,
    attach_type,
    validate_wellformed,
)
from .schema import CONST_RELATION, DEFAULT_OPERATIONS, KBSchema

RETURN_ROLE = "arg-return"


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class EntityLit:
    type: str
    name: str


Term = Union[Var, EntityLit]


@dataclass(frozen=True)
class TypePred:
    type: str
    term: Term


@dataclass(frozen=True)
class Relation:
    rel: str
    term1: Term
    term2: Term


@dataclass(frozen=True)
class Const:
    var: Var
    entity: EntityLit


@dataclass(frozen=True)
class Conjunction:
    terms: tuple


@dataclass(frozen=True)
class OperatorApp:
    op: str
    roles: tuple[tuple[str, Var], ...]
    body: Conjunction


@dataclass(frozen=True)
class Answer:
    var: Var
    body: Conjunction


LogicalForm = Answer

# --- tokenizer / parser ------------------------------------------------------

_TOKEN_RE = re.compile(r"\s*(?:(<[A-Za-z_][A-Za-z0-9_]*:\d+>)|([A-Za-z0-9_]+)|([(),]))")
_VAR_RE = re.compile(r"^[A-Z][0-9]*$")


def tokenize(text: str) -> list[tuple[str, int]]:
    tokens = []
    pos = 0
    n = len(text)
    while pos < n:
        if text[pos].isspace():
            pos += 1
            continue
        m = _TOKEN_RE.match(text, pos)
        if m is None or m.end() == pos:
            raise LFSyntaxError(f"unexpected character {text[pos]!r}", pos)
        tok = m.group(1) or m.group(2) or m.group(3)
        tokens.append((tok, m.start(m.lastindex)))
        pos = m.end()
    return tokens


def linearize(text: str) -> list[str]:
    """Symbol, parenthesis and comma tokens of a logical-form string."""
    return [t for t, _ in tokenize(text)]


@dataclass
class _Call:
    name: str
    args: list
    pos: int


@dataclass
class _Atom:
    text: str
    pos: int


@dataclass
class _Group:
    items: list
    pos: int


class _Reader:
    def __init__(self, text: str):
        self.text = text
        self.tokens = tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i][0] if self.i < len(self.tokens) else None

    def pos(self):
        return self.tokens[self.i][1] if self.i < len(self.tokens) else len(self.text)

    def take(self, expected: str | None = None) -> str:
        if self.i >= len(self.tokens):
            raise LFSyntaxError(
                f"unexpected end of input{f', expected {expected!r}' if expected else ''}",
                len(self.text),
            )
        tok = self.tokens[self.i][0]
        if expected is not None and tok != expected:
            raise LFSyntaxError(f"expected {expected!r}, got {tok!r}", self.pos())
        self.i += 1
        return tok

    def expr(self):
        pos = self.pos()
        tok = self.peek()
        if tok == "(":
            self.take("(")
            items = [self.expr()]
            while self.peek() == ",":
                self.take(",")
                items.append(self.expr())
            self.take(")")
            return _Group(items, pos)
        if tok is None or tok in "),":
            self.take("term") if tok is None else None
            raise LFSyntaxError(f"expected a term, got {tok!r}", pos)
        self.take()
        if self.peek() != "(":
            return _Atom(tok, pos)
        self.take("(")
        args = [self.expr()]
        while self.peek() == ",":
            self.take(",")
            args.append(self.expr())
        self.take(")")
        return _Call(tok, args, pos)


def parse_lf(text: str, schema: KBSchema | None = None, strict: bool = False) -> Answer:
    reader = _Reader(text)
    raw = reader.expr()
    if reader.peek() is not None:
        raise LFSyntaxError(f"trailing input {reader.peek()!r}", reader.pos())
    ops = schema.operations if schema is not None else DEFAULT_OPERATIONS
    if not (isinstance(raw, _Call) and raw.name == "answer" and len(raw.args) == 2):
        raise LFSyntaxError("expected answer(VAR, body)", 0)
    lf = Answer(_var(raw.args[0]), _body(raw.args[1], ops))
    if strict:
        if schema is None:
            raise ValueError("strict parsing needs a schema")
        check_symbols(lf, schema)
    return lf


def _var(node) -> Var:
    if isinstance(node, _Atom) and _VAR_RE.match(node.text):
        return Var(node.text)
    raise LFSyntaxError("expected a variable", node.pos)


def _arg(node) -> Term:
    if isinstance(node, _Atom):
        if _VAR_RE.match(node.text):
            return Var(node.text)
        raise LFSyntaxError(f"bare symbol {node.text!r}; entities are written <type>id(name)",
                            node.pos)
    if (isinstance(node, _Call) and node.name.endswith("id") and len(node.name) > 2
            and len(node.args) == 1 and isinstance(node.args[0], _Atom)):
        return EntityLit(node.name[:-2], node.args[0].text)
    raise LFSyntaxError("expected a variable or entity", node.pos)


def _body(node, ops) -> Conjunction:
    return Conjunction(tuple(_terms(node, ops)))


def _terms(node, ops) -> list:
    if isinstance(node, _Group):
        out = []
        for item in node.items:
            out.extend(_terms(item, ops))
        return out
    return [_term(node, ops)]


def _term(node, ops):
    if not isinstance(node, _Call):
        raise LFSyntaxError("expected a predicate", node.pos)
    name, args = node.name, node.args
    if name in ops:
        roles = ops[name]
        if not roles:
            if len(args) != 1:
                raise LFSyntaxError(f"{name} takes a single body", node.pos)
            return OperatorApp(name, (), _body(args[0], ops))
        if len(args) != len(roles) + 1:
            raise LFSyntaxError(f"{name} takes {len(roles)} variables and a body", node.pos)
        if roles[-1] == RETURN_ROLE:
            var_nodes, body_node = args[:-2] + args[-1:], args[-2]
        else:
            var_nodes, body_node = args[:-1], args[-1]
        bound = tuple((role, _var(v)) for role, v in zip(roles, var_nodes))
        return OperatorApp(name, bound, _body(body_node, ops))
    if len(args) == 1:
        return TypePred(name, _arg(args[0]))
    if len(args) == 2:
        t1, t2 = _arg(args[0]), _arg(args[1])
        if name == CONST_RELATION and isinstance(t1, Var) and isinstance(t2, EntityLit):
            return Const(t1, t2)
        return Relation(name, t1, t2)
    raise LFSyntaxError(f"{name} has {len(args)} arguments", node.pos)


def check_symbols(lf: Answer, schema: KBSchema) -> None:
    """Raise UnknownSymbol for types, relations or entities the schema lacks."""
    for term in iter_terms(lf.body):
        if isinstance(term, TypePred):
            if term.type not in schema.types:
                raise UnknownSymbol(f"type {term.type!r}")
        elif isinstance(term, (Relation, Const)):
            rel = term.rel if isinstance(term, Relation) else CONST_RELATION
            if not schema.has_relation(rel):
                raise UnknownSymbol(f"relation {rel!r}")
        elif isinstance(term, OperatorApp) and term.op not in schema.operations:
            raise UnknownSymbol(f"operation {term.op!r}")
        for ent in _entities_of(term):
            if schema.entity_type(ent.name) is None:
                raise UnknownSymbol(f"entity {ent.name!r}")
            if schema.entity_type(ent.name) != ent.type:
                raise UnknownSymbol(f"entity {ent.name!r} is a {schema.entity_type(ent.name)}, "
                                    f"not a {ent.type}")


def iter_terms(conj: Conjunction):
    for t in conj.terms:
        yield t
        if isinstance(t, OperatorApp):
            yield from iter_terms(t.body)


def _entities_of(term):
    if isinstance(term, TypePred):
        args = [term.term]
    elif isinstance(term, Relation):
        args = [term.term1, term.term2]
    elif isinstance(term, Const):
        args = [term.entity]
    else:
        args = []
    return [a for a in args if isinstance(a, EntityLit)]


def entities_in(lf: Answer) -> list[EntityLit]:
    out = []
    for t in iter_terms(lf.body):
        for e in _entities_of(t):
            if e not in out:
                out.append(e)
    return out


# --- printing ----------------------------------------------------------------

def _fmt_term(t: Term) -> str:
    if isinstance(t, Var):
        return t.name
    return f"{t.type}id({t.name})"


def _fmt_body(conj: Conjunction) -> str:
    parts = [_fmt(t) for t in conj.terms]
    return parts[0] if len(parts) == 1 else f"({','.join(parts)})"


def _fmt(t) -> str:
    if isinstance(t, TypePred):
        return f"{t.type}({_fmt_term(t.term)})"
    if isinstance(t, Relation):
        return f"{t.rel}({_fmt_term(t.term1)},{_fmt_term(t.term2)})"
    if isinstance(t, Const):
        return f"{CONST_RELATION}({t.var.name},{_fmt_term(t.entity)})"
    if isinstance(t, OperatorApp):
        vs = [v.name for _, v in t.roles]
        body = _fmt_body(t.body)
        if not vs:
            args = [body]
        elif t.roles[-1][0] == RETURN_ROLE:
            args = vs[:-1] + [body, vs[-1]]
        else:
            args = vs + [body]
        return f"{t.op}({','.join(args)})"
    raise TypeError(f"not a logical-form term: {t!r}")


def format_lf(lf: Answer) -> str:
    """Literal rendering: source order and variable names are kept."""
    return f"answer({lf.var.name},{_fmt_body(lf.body)})"


def print_lf(lf: Answer, schema: KBSchema | None = None) -> str:
    """Canonical text: conjuncts in conversion order, variables renamed
    A, B, C, ... by discovery. Forms that cannot become a well-formed
    graph are rendered literally."""
    try:
        return format_lf(canonicalize(lf, schema))
    except Seq2ActError:
        return format_lf(lf)


def canonicalize(lf: Answer, schema: KBSchema | None = None) -> Answer:
    hints = {e.name: e.type for e in entities_in(lf)}
    return actions_to_lf(lf_to_actions(lf, schema), schema, entity_types=hints)


# --- logical form -> graph ---------------------------------------------------

def lf_to_graph(lf: Answer, schema: KBSchema | None = None, strict: bool = False) -> SemanticGraph:
    if strict:
        if schema is None:
            raise ValueError("strict conversion needs a schema")
        check_symbols(lf, schema)
    graph = SemanticGraph()
    nodes: dict[tuple[str, str], NodeId] = {}

    def node_of(term: Term) -> NodeId:
        if isinstance(term, Var):
            key = ("var", term.name)
            if key not in nodes:
                nodes[key] = add_node(graph, NodeKind.VARIABLE, term.name)
        else:
            key = ("ent", term.name)
            if key not in nodes:
                nodes[key] = add_node(graph, NodeKind.ENTITY, term.name, entity_type=term.type)
        return nodes[key]

    def walk(conj: Conjunction) -> list[ElementRef]:
        refs = []
        for t in conj.terms:
            if isinstance(t, TypePred):
                target = node_of(t.term)
                tnode = add_node(graph, NodeKind.TYPE, t.type)
                attach_type(graph, tnode, target)
                refs.append(("attachment", len(graph.type_attachments) - 1))
            elif isinstance(t, (Relation, Const)):
                if isinstance(t, Const):
                    rel, a, b = CONST_RELATION, t.var, t.entity
                else:
                    rel, a, b = t.rel, t.term1, t.term2
                add_edge(graph, rel, node_of(a), node_of(b))
                refs.append(("edge", len(graph.edges) - 1))
            elif isinstance(t, OperatorApp):
                position = len(graph.elements)
                bindings = [(role, node_of(v)) for role, v in t.roles]
                children = walk(t.body)
                idx = add_scope(graph, t.op, children, bindings, position=position)
                refs.append(("scope", idx))
            else:
                raise TypeError(f"not a logical-form term: {t!r}")
        return refs

    graph.return_node = node_of(lf.var)
    walk(lf.body)
    mentioned = any(
        lf.var in _vars_of(t) for t in iter_terms(lf.body)
    )
    if not mentioned:
        raise UnboundVariable(f"answer variable {lf.var.name} does not occur in the body")
    return graph


def _vars_of(term) -> list[Var]:
    if isinstance(term, TypePred):
        args = [term.term]
    elif isinstance(term, Relation):
        args = [term.term1, term.term2]
    elif isinstance(term, Const):
        args = [term.var]
    elif isinstance(term, OperatorApp):
        args = [v for _, v in term.roles]
    else:
        args = []
    return [a for a in args if isinstance(a, Var)]


# --- graph -> actions (canonical depth-first order) --------------------------

def _scope_paths(graph: SemanticGraph) -> dict[ElementRef, tuple[str, ...]]:
    parent = graph.parent_scopes()
    out = {}

    def path(ref):
        if ref in out:
            return out[ref]
        p = parent.get(ref)
        out[ref] = () if p is None else path(("scope", p)) + (graph.operation_scopes[p].operation,)
        return out[ref]

    refs = ([("edge", i) for i in range(len(graph.edges))]
            + [("attachment", i) for i in range(len(graph.type_attachments))]
            + [("scope", i) for i in range(len(graph.operation_scopes))])
    for r in refs:
        path(r)
    return out


def refine_colors(graph: SemanticGraph) -> list[int]:
    """Colour refinement over nodes; colours ignore variable names and
    element order, so they are stable under renaming and permutation."""
    paths = _scope_paths(graph)
    colors = []
    init = [(n.kind.value, "" if n.kind is NodeKind.VARIABLE else n.label, n.entity_type or "")
            for n in graph.nodes]
    ranks = {sig: i for i, sig in enumerate(sorted(set(init)))}
    colors = [ranks[s] for s in init]
    for _ in range(len(graph.nodes)):
        neigh: list[list] = [[] for _ in graph.nodes]
        for i, e in enumerate(graph.edges):
            p = paths[("edge", i)]
            neigh[e.arg1].append(("e", e.relation, 0, colors[e.arg2], p))
            neigh[e.arg2].append(("e", e.relation, 1, colors[e.arg1], p))
        for i, a in enumerate(graph.type_attachments):
            p = paths[("attachment", i)]
            neigh[a.constrained_node].append(("t", graph.nodes[a.type_node].label, 0, 0, p))
            neigh[a.type_node].append(("t", "", 1, colors[a.constrained_node], p))
        for i, s in enumerate(graph.operation_scopes):
            p = paths[("scope", i)]
            others = tuple(colors[m] for _, m in s.arg_bindings)
            for k, (role, m) in enumerate(s.arg_bindings):
                neigh[m].append(("r", s.operation, k, others, p))
        sigs = [(colors[n], tuple(sorted(neigh[n]))) for n in range(len(graph.nodes))]
        ranks = {sig: i for i, sig in enumerate(sorted(set(sigs)))}
        new = [ranks[s] for s in sigs]
        if len(set(new)) == len(set(colors)):
            colors = new
            break
        colors = new
    return colors


def graph_to_actions(graph: SemanticGraph) -> list[Action]:
    """Depth-first emission from the return node.

    At each node: type attachments first, then edges, then operation
    scopes touching it, ties broken by the colour of what lies beyond and
    finally by source order. A neighbour reached over an edge is created
    just before the edge and explored right after it. A scope is emitted
    as start, its contents, end, then its role arguments.
    """
    if graph.return_node is None:
        raise NotConvertible("graph has no return node")
    colors = refine_colors(graph)
    scopes = graph.operation_scopes
    touched: dict[ElementRef, frozenset[NodeId]] = {}

    def touch(ref: ElementRef) -> frozenset[NodeId]:
        if ref not in touched:
            kind, i = ref
            if kind == "edge":
                touched[ref] = frozenset((graph.edges[i].arg1, graph.edges[i].arg2))
            elif kind == "attachment":
                touched[ref] = frozenset((graph.type_attachments[i].constrained_node,))
            else:
                s = scopes[i]
                acc = {m for _, m in s.arg_bindings}
                for r in s.scope:
                    acc |= touch(r)
                touched[ref] = frozenset(acc)
        return touched[ref]

    def signature(ref: ElementRef):
        kind, i = ref
        if kind == "edge":
            e = graph.edges[i]
            return (1, e.relation, colors[e.arg1], colors[e.arg2])
        if kind == "attachment":
            a = graph.type_attachments[i]
            return (0, graph.nodes[a.type_node].label, colors[a.constrained_node])
        s = scopes[i]
        return (2, s.operation, tuple(colors[m] for _, m in s.arg_bindings),
                tuple(sorted(signature(r) for r in s.scope)))

    def item_key(ref: ElementRef, n: NodeId):
        kind, i = ref
        if kind == "attachment":
            return (0, graph.nodes[graph.type_attachments[i].type_node].label)
        if kind == "edge":
            e = graph.edges[i]
            forward = e.arg1 == n
            return (1, e.relation, 0 if forward else 1, colors[e.arg2 if forward else e.arg1])
        s = scopes[i]
        positions = tuple(k for k, (_, m) in enumerate(s.arg_bindings) if m == n)
        return (2, s.operation, positions, signature(ref))

    labels: dict[NodeId, str] = {}
    created: list[NodeId] = []
    out: list[Action] = []

    def create(n: NodeId):
        node = graph.nodes[n]
        if node.kind is NodeKind.VARIABLE:
            lab = variable_label(sum(1 for m in created if graph.nodes[m].kind is NodeKind.VARIABLE))
            out.append(add_variable(lab))
        elif node.kind is NodeKind.ENTITY:
            lab = node.label
            out.append(add_entity(lab))
        else:
            raise NotConvertible(f"type node {node.label} used as an argument")
        labels[n] = lab
        created.append(n)

    def dfs(n: NodeId, remaining: list[ElementRef]):
        while True:
            touching = [(item_key(r, n), k, r) for k, r in enumerate(remaining) if n in touch(r)]
            if not touching:
                return
            _, k, ref = min(touching)
            remaining.pop(k)
            emit(ref, n, remaining)

    def emit(ref: ElementRef, n: NodeId, remaining: list[ElementRef]):
        kind, i = ref
        if kind == "attachment":
            a = graph.type_attachments[i]
            out.append(add_type(graph.nodes[a.type_node].label))
            out.append(argument(TYPE_ARG, labels[n]))
            return
        if kind == "edge":
            e = graph.edges[i]
            other = e.arg2 if e.arg1 == n else e.arg1
            if other not in labels:
                create(other)
            out.append(add_edge_action(e.relation))
            out.append(argument(ARG1, labels[e.arg1]))
            out.append(argument(ARG2, labels[e.arg2]))
            dfs(other, remaining)
            return
        s = scopes[i]
        before = len(created)
        out.append(start_operation(s.operation))
        emit_block(i)
        for _, m in s.arg_bindings:
            if m not in labels:
                create(m)
        out.append(end_operation(s.operation))
        for role, m in s.arg_bindings:
            out.append(argument(role, labels[m]))
        for m in created[before:]:
            dfs(m, remaining)

    def emit_block(scope_idx: int | None):
        items = graph.top_level() if scope_idx is None else scopes[scope_idx].scope
        remaining = list(items)
        while remaining:
            seed = None
            for m in created:
                if any(m in touch(r) for r in remaining):
                    seed = m
                    break
            if seed is None:
                reachable = set().union(*(touch(r) for r in remaining))
                roles = [] if scope_idx is None else [m for _, m in scopes[scope_idx].arg_bindings]
                role_seeds = [m for m in roles if m in reachable]
                if role_seeds:
                    seed = role_seeds[0]
                else:
                    seed = min(reachable, key=lambda m: (colors[m], m))
                create(seed)
            dfs(seed, remaining)

    create(graph.return_node)
    emit_block(None)
    return out


def lf_to_actions(lf: Answer, schema: KBSchema | None = None) -> list[Action]:
    graph = lf_to_graph(lf, schema)
    problems = validate_wellformed(graph)
    if problems:
        raise NotConvertible(", ".join(v.rule for v in problems))
    return graph_to_actions(graph)


# --- graph / actions -> logical form -----------------------------------------

def graph_to_lf(graph: SemanticGraph, schema: KBSchema | None = None,
                entity_types: dict[str, str] | None = None) -> Answer:
    """Read a logical form off a graph, conjuncts in creation order."""
    if graph.return_node is None or graph.nodes[graph.return_node].kind is not NodeKind.VARIABLE:
        raise NotConvertible("graph has no return variable")
    hints = entity_types or {}

    def term(n: NodeId) -> Term:
        node = graph.nodes[n]
        if node.kind is NodeKind.VARIABLE:
            return Var(node.label)
        if node.kind is NodeKind.ENTITY:
            etype = node.entity_type or hints.get(node.label)
            if etype is None and schema is not None:
                etype = schema.entity_type(node.label)
            if etype is None:
                raise NotConvertible(f"entity {node.label} has no known type")
            return EntityLit(etype, node.label)
        raise NotConvertible(f"type node {node.label} used as an argument")

    def element(ref: ElementRef):
        kind, i = ref
        if kind == "attachment":
            a = graph.type_attachments[i]
            return TypePred(graph.nodes[a.type_node].label, term(a.constrained_node))
        if kind == "edge":
            e = graph.edges[i]
            t1, t2 = term(e.arg1), term(e.arg2)
            if e.relation == CONST_RELATION and isinstance(t1, Var) and isinstance(t2, EntityLit):
                return Const(t1, t2)
            return Relation(e.relation, t1, t2)
        s = graph.operation_scopes[i]
        roles = []
        for role, m in s.arg_bindings:
            t = term(m)
            if not isinstance(t, Var):
                raise NotConvertible(f"{s.operation} role {role} binds an entity")
            roles.append((role, t))
        if not s.scope:
            raise NotConvertible(f"{s.operation} has an empty scope")
        return OperatorApp(s.operation, tuple(roles), Conjunction(tuple(element(r) for r in s.scope)))

    body = tuple(element(r) for r in graph.top_level())
    if not body:
        raise NotConvertible("graph has no elements")
    return Answer(Var(graph.nodes[graph.return_node].label), Conjunction(body))


def actions_to_lf(seq, schema: KBSchema | None = None,
                  entity_types: dict[str, str] | None = None) -> Answer:
    return graph_to_lf(build_graph(seq, schema), schema, entity_types)
