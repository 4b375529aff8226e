"""Action alphabet and the interpreter that folds actions into a graph.

Every action is a ``structure:semantic`` pair, e.g. ``add_edge:next_to``
or ``arg1_node:A``. Argument actions follow their main action directly:
one ``arg`` after ``add_type_node``, ``arg1_node``/``arg2_node`` after
``add_edge``, and the operation's declared roles after
``end_operation``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from typing import Iterable

from .errors import (
    ArityViolation,
    DuplicateNode,
    IllFormedResult,
    NonCanonicalVariable,
    OrphanArgument,
    ParseError,
    SelfLoop,
    UnbalancedOperation,
    UnknownLabel,
)
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
from .schema import DEFAULT_OPERATIONS, KBSchema, parse_placeholder

ADD_VARIABLE = "add_variable"
ADD_ENTITY = "add_entity_node"
ADD_TYPE = "add_type_node"
ADD_EDGE = "add_edge"
START_OPERATION = "start_operation"
END_OPERATION = "end_operation"
MAIN_STRUCTURES = (ADD_VARIABLE, ADD_ENTITY, ADD_TYPE, ADD_EDGE, START_OPERATION, END_OPERATION)

TYPE_ARG = "arg"
ARG1 = "arg1_node"
ARG2 = "arg2_node"

ALIASES = {"add_entity": ADD_ENTITY, "add_type": ADD_TYPE, "add_node": ADD_VARIABLE}

EOS_TEXT = "<eos>"

_NOT_ARGUMENT = frozenset(MAIN_STRUCTURES) | {EOS_TEXT}

_STRUCTURE_RE = re.compile(r"^[A-Za-z][A-Za-z0-9_-]*$")


@dataclass(frozen=True, order=True)
class Action:
    structure: str
    semantic: str

    @property
    def is_argument(self) -> bool:
        return self.structure not in _NOT_ARGUMENT

    @property
    def role(self) -> str:
        return self.structure

    @property
    def label(self) -> str:
        return self.semantic

    def __str__(self) -> str:
        return action_to_string(self)


EOS = Action(EOS_TEXT, EOS_TEXT)


def add_variable(label: str) -> Action:
    return Action(ADD_VARIABLE, label)


def add_entity(label: str) -> Action:
    return Action(ADD_ENTITY, label)


def add_type(label: str) -> Action:
    return Action(ADD_TYPE, label)


def add_edge_action(relation: str) -> Action:
    return Action(ADD_EDGE, relation)


def start_operation(op: str) -> Action:
    return Action(START_OPERATION, op)


def end_operation(op: str) -> Action:
    return Action(END_OPERATION, op)


def argument(role: str, label: str) -> Action:
    return Action(role, label)


def variable_label(index: int) -> str:
    """Canonical variable names: A..Z, then A1..Z1, A2, ..."""
    letter = chr(ord("A") + index % 26)
    return letter if index < 26 else f"{letter}{index // 26}"


def action_to_string(action: Action) -> str:
    if action == EOS:
        return EOS_TEXT
    return f"{action.structure}:{action.semantic}"


def string_to_action(text: str) -> Action:
    if text == EOS_TEXT:
        return EOS
    structure, sep, semantic = text.partition(":")
    if not sep or not semantic or not structure:
        raise ParseError(f"malformed action {text!r}: expected <structure>:<semantic>")
    if any(c.isspace() for c in text) or not _STRUCTURE_RE.match(structure):
        raise ParseError(f"malformed action {text!r}")
    structure = ALIASES.get(structure, structure)
    if structure not in MAIN_STRUCTURES and not structure.startswith("arg"):
        raise ParseError(f"unknown action structure {structure!r}")
    return Action(structure, semantic)


def format_actions(actions: Iterable[Action]) -> str:
    return " ".join(action_to_string(a) for a in actions)


def parse_actions(text: str) -> list[Action]:
    return [string_to_action(tok) for tok in text.split()]


def operation_roles(op: str, schema: KBSchema | None) -> tuple[str, ...]:
    table = schema.operations if schema is not None else DEFAULT_OPERATIONS
    if op not in table:
        raise UnknownLabel(f"operation {op!r} is not declared")
    return table[op]


@dataclass(frozen=True)
class OpenOperation:
    label: str
    position: int
    children: tuple[ElementRef, ...] = ()


@dataclass(frozen=True)
class Pending:
    main: Action
    roles: tuple[str, ...]
    collected: tuple[tuple[str, str], ...] = ()
    frame: OpenOperation | None = None

    @property
    def next_role(self) -> str:
        return self.roles[len(self.collected)]


@dataclass(frozen=True)
class PartialGraphState:
    graph: SemanticGraph = field(default_factory=SemanticGraph)
    schema: KBSchema | None = None
    pending: Pending | None = None
    open_operations: tuple[OpenOperation, ...] = ()
    symbols: dict[str, NodeId] = field(default_factory=dict)
    n_variables: int = 0
    # memo slot for the controller's per-state analysis
    cache: dict = field(default_factory=dict, compare=False, repr=False)

    @classmethod
    def empty(cls, schema: KBSchema | None = None) -> PartialGraphState:
        return cls(schema=schema)

    @property
    def collected_args(self) -> tuple[tuple[str, str], ...]:
        return self.pending.collected if self.pending else ()

    def next_variable(self) -> str:
        return variable_label(self.n_variables)

    def node_for(self, label: str) -> NodeId | None:
        return self.symbols.get(label)

    def _evolve(self, **changes) -> PartialGraphState:
        # dataclasses.replace re-runs __init__; this is on the decoding hot path
        new = object.__new__(PartialGraphState)
        new.__dict__.update(self.__dict__, **changes)
        new.__dict__["cache"] = {}
        return new


def _register(state: PartialGraphState, ref: ElementRef) -> tuple[OpenOperation, ...]:
    if not state.open_operations:
        return state.open_operations
    top = state.open_operations[-1]
    return state.open_operations[:-1] + (replace(top, children=top.children + (ref,)),)


def apply_action(state: PartialGraphState, action: Action) -> PartialGraphState:
    """Return the state after ``action``; raises on hard errors."""
    if action == EOS:
        raise UnknownLabel("end-of-sequence is not a graph action")
    if action.is_argument:
        return _apply_argument(state, action)
    if state.pending is not None:
        raise ArityViolation(
            f"{action} while {state.pending.main} still expects {state.pending.next_role}"
        )
    schema = state.schema
    kind, label = action.structure, action.semantic

    if kind == ADD_VARIABLE:
        expected = state.next_variable()
        if label != expected:
            raise NonCanonicalVariable(f"next variable must be {expected}, got {label}")
        graph = state.graph.copy()
        nid = add_node(graph, NodeKind.VARIABLE, label)
        if graph.return_node is None:
            graph.return_node = nid
        return state._evolve(graph=graph, symbols={**state.symbols, label: nid},
                       n_variables=state.n_variables + 1)
    if kind == ADD_ENTITY:
        if label in state.symbols:
            raise DuplicateNode(f"entity {label} already in the graph")
        graph = state.graph.copy()
        ph = parse_placeholder(label)
        nid = add_node(graph, NodeKind.ENTITY, label, schema,
                       entity_type=ph[0] if ph else None)
        return state._evolve(graph=graph, symbols={**state.symbols, label: nid})
    if kind == ADD_TYPE:
        if schema is not None and label not in schema.types:
            raise UnknownLabel(f"type {label!r} is not in the schema")
        return state._evolve(pending=Pending(action, (TYPE_ARG,)))
    if kind == ADD_EDGE:
        if schema is not None and not schema.has_relation(label):
            raise UnknownLabel(f"relation {label!r} is not in the schema")
        return state._evolve(pending=Pending(action, (ARG1, ARG2)))
    if kind == START_OPERATION:
        operation_roles(label, schema)
        frame = OpenOperation(label, len(state.graph.elements))
        return state._evolve(open_operations=state.open_operations + (frame,))
    if kind == END_OPERATION:
        if not state.open_operations:
            raise UnbalancedOperation(f"{action} with no open operation")
        frame = state.open_operations[-1]
        if frame.label != label:
            raise UnbalancedOperation(f"{action} closes start_operation:{frame.label}")
        roles = operation_roles(label, schema)
        popped = state._evolve(open_operations=state.open_operations[:-1])
        if not roles:
            return _commit_scope(popped, frame, [])
        return popped._evolve(pending=Pending(action, roles, (), frame))
    raise UnknownLabel(f"unknown action {action}")


def _apply_argument(state: PartialGraphState, action: Action) -> PartialGraphState:
    p = state.pending
    if p is None:
        raise OrphanArgument(f"{action} has no main action to attach to")
    if action.role != p.next_role:
        raise ArityViolation(f"{p.main} expects {p.next_role}, got {action.role}")
    label = action.label
    node = state.symbols.get(label)
    if node is None:
        raise UnknownLabel(f"no node labelled {label!r}")
    graph = state.graph
    main = p.main.structure
    if main == ADD_EDGE and action.role == ARG2 and state.symbols[p.collected[0][1]] == node:
        raise SelfLoop(f"{p.main.semantic}({label}, {label})")
    if main == END_OPERATION and graph.nodes[node].kind is not NodeKind.VARIABLE:
        raise ArityViolation(f"{p.main} role {action.role} must bind a variable, got {label}")

    collected = p.collected + ((action.role, label),)
    if len(collected) < len(p.roles):
        return state._evolve(pending=replace(p, collected=collected))

    done = state._evolve(pending=None)
    if main == END_OPERATION:
        bindings = [(role, state.symbols[lab]) for role, lab in collected]
        return _commit_scope(done, p.frame, bindings)
    graph = graph.copy()
    if main == ADD_TYPE:
        tnode = add_node(graph, NodeKind.TYPE, p.main.semantic, state.schema)
        attach_type(graph, tnode, node)
        ref = ("attachment", len(graph.type_attachments) - 1)
    else:
        add_edge(graph, p.main.semantic, state.symbols[collected[0][1]], node)
        ref = ("edge", len(graph.edges) - 1)
    return done._evolve(graph=graph, open_operations=_register(done, ref))


def _commit_scope(state: PartialGraphState, frame: OpenOperation,
                  bindings: list[tuple[str, NodeId]]) -> PartialGraphState:
    graph = state.graph.copy()
    idx = add_scope(graph, frame.label, list(frame.children), bindings, position=frame.position)
    return state._evolve(graph=graph, open_operations=_register(state, ("scope", idx)))


def fold(actions: Iterable[Action], schema: KBSchema | None = None) -> PartialGraphState:
    state = PartialGraphState.empty(schema)
    for a in actions:
        state = apply_action(state, a)
    return state


def build_graph(seq: Iterable[Action], schema: KBSchema | None = None) -> SemanticGraph:
    state = fold(seq, schema)
    if state.pending is not None:
        raise IllFormedResult(f"{state.pending.main} is missing {state.pending.next_role}")
    if state.open_operations:
        raise UnbalancedOperation(
            f"start_operation:{state.open_operations[-1].label} is never closed"
        )
    violations = validate_wellformed(state.graph)
    if violations:
        raise IllFormedResult(", ".join(v.rule for v in violations))
    return state.graph


def is_complete(state: PartialGraphState) -> bool:
    """A state that may end the sequence: nothing pending, scopes closed,
    well-formed, and printable as a logical form (a return variable and at
    least one element)."""
    if state.pending is not None or state.open_operations:
        return False
    g = state.graph
    if g.return_node is None or not g.elements:
        return False
    return not validate_wellformed(g)
