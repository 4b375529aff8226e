"""Semantic graph: variable/entity/type nodes, relation edges, type
attachments and operation scopes."""

from __future__ import annotations

from collections import Counter, defaultdict
from dataclasses import dataclass, field
from enum import Enum

from .errors import DanglingEndpoint, DuplicateType, SelfLoop, UnknownEntity, UnknownType

NodeId = int
# ("edge", i) | ("attachment", i) | ("scope", i)
ElementRef = tuple[str, int]


class NodeKind(Enum):
    VARIABLE = "variable"
    ENTITY = "entity"
    TYPE = "type"


@dataclass(frozen=True)
class Node:
    id: NodeId
    kind: NodeKind
    label: str
    # schema type of an entity node; None for variables and type nodes
    entity_type: str | None = None


@dataclass(frozen=True)
class Edge:
    relation: str
    arg1: NodeId
    arg2: NodeId


@dataclass(frozen=True)
class TypeAttachment:
    type_node: NodeId
    constrained_node: NodeId


@dataclass
class OperationScope:
    operation: str
    scope: list[ElementRef] = field(default_factory=list)
    arg_bindings: list[tuple[str, NodeId]] = field(default_factory=list)


@dataclass(frozen=True)
class Violation:
    rule: str
    detail: str = ""


@dataclass
class SemanticGraph:
    nodes: list[Node] = field(default_factory=list)
    edges: list[Edge] = field(default_factory=list)
    type_attachments: list[TypeAttachment] = field(default_factory=list)
    operation_scopes: list[OperationScope] = field(default_factory=list)
    return_node: NodeId | None = None
    # every element in creation order; a scope sits where it was opened
    elements: list[ElementRef] = field(default_factory=list)

    def copy(self) -> SemanticGraph:
        return SemanticGraph(
            list(self.nodes),
            list(self.edges),
            list(self.type_attachments),
            [OperationScope(s.operation, list(s.scope), list(s.arg_bindings))
             for s in self.operation_scopes],
            self.return_node,
            list(self.elements),
        )

    def node(self, node_id: NodeId) -> Node:
        return self.nodes[node_id]

    def has_node(self, node_id: NodeId) -> bool:
        return 0 <= node_id < len(self.nodes)

    def variables(self) -> list[Node]:
        return [n for n in self.nodes if n.kind is NodeKind.VARIABLE]

    def parent_scopes(self) -> dict[ElementRef, int]:
        """Element -> index of the scope that directly contains it."""
        out = {}
        for i, s in enumerate(self.operation_scopes):
            for ref in s.scope:
                out[ref] = i
        return out

    def top_level(self) -> list[ElementRef]:
        inner = self.parent_scopes()
        return [ref for ref in self.elements if ref not in inner]

    def attachments_of(self, node_id: NodeId) -> list[str]:
        return [
            self.nodes[a.type_node].label
            for a in self.type_attachments
            if a.constrained_node == node_id
        ]


def add_node(graph: SemanticGraph, kind: NodeKind, label: str, schema=None,
             entity_type: str | None = None) -> NodeId:
    if schema is not None:
        if kind is NodeKind.ENTITY:
            entity_type = schema.entity_type(label)
            if entity_type is None:
                raise UnknownEntity(f"entity {label!r} is not in the schema")
        elif kind is NodeKind.TYPE and label not in schema.types:
            raise UnknownType(f"type {label!r} is not in the schema")
    if kind is not NodeKind.ENTITY:
        entity_type = None
    node_id = len(graph.nodes)
    graph.nodes.append(Node(node_id, kind, label, entity_type))
    return node_id


def add_edge(graph: SemanticGraph, relation: str, arg1: NodeId, arg2: NodeId) -> None:
    for n in (arg1, arg2):
        if not graph.has_node(n):
            raise DanglingEndpoint(f"node {n} is not in the graph")
    if arg1 == arg2:
        raise SelfLoop(f"{relation}({graph.nodes[arg1].label}, {graph.nodes[arg2].label})")
    graph.edges.append(Edge(relation, arg1, arg2))
    graph.elements.append(("edge", len(graph.edges) - 1))


def attach_type(graph: SemanticGraph, type_node: NodeId, node: NodeId) -> None:
    for n in (type_node, node):
        if not graph.has_node(n):
            raise DanglingEndpoint(f"node {n} is not in the graph")
    label = graph.nodes[type_node].label
    if label in graph.attachments_of(node):
        raise DuplicateType(f"{graph.nodes[node].label} already has type {label}")
    graph.type_attachments.append(TypeAttachment(type_node, node))
    graph.elements.append(("attachment", len(graph.type_attachments) - 1))


def add_scope(graph: SemanticGraph, operation: str, children: list[ElementRef],
              bindings: list[tuple[str, NodeId]], position: int | None = None) -> int:
    for _, n in bindings:
        if not graph.has_node(n):
            raise DanglingEndpoint(f"node {n} is not in the graph")
    graph.operation_scopes.append(OperationScope(operation, list(children), list(bindings)))
    ref = ("scope", len(graph.operation_scopes) - 1)
    if position is None:
        graph.elements.append(ref)
    else:
        graph.elements.insert(position, ref)
    return ref[1]


class _UnionFind:
    def __init__(self, items):
        self.parent = {x: x for x in items}

    def find(self, x):
        while self.parent[x] != x:
            self.parent[x] = self.parent[self.parent[x]]
            x = self.parent[x]
        return x

    def union(self, a, b) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        self.parent[ra] = rb
        return True


def relation_components(graph: SemanticGraph) -> dict[NodeId, NodeId]:
    """Node -> representative of its component under relation edges only."""
    uf = _UnionFind(range(len(graph.nodes)))
    for e in graph.edges:
        uf.union(e.arg1, e.arg2)
    return {n: uf.find(n) for n in range(len(graph.nodes))}


def connectivity_links(graph: SemanticGraph):
    """Node pairs joined by an edge, an attachment or a shared operation scope."""
    for e in graph.edges:
        yield e.arg1, e.arg2
    for a in graph.type_attachments:
        yield a.type_node, a.constrained_node
    for s in graph.operation_scopes:
        bound = [n for _, n in s.arg_bindings]
        for a, b in zip(bound, bound[1:]):
            yield a, b


def validate_wellformed(graph: SemanticGraph) -> list[Violation]:
    """Violations in the order: connectivity, cycles, dangling references,
    scope imbalance. An empty list means well-formed."""
    ids = set(range(len(graph.nodes)))
    dangling: list[Violation] = []
    for e in graph.edges:
        for n in (e.arg1, e.arg2):
            if n not in ids:
                dangling.append(Violation("DanglingEndpoint", f"edge {e.relation} -> {n}"))
    for a in graph.type_attachments:
        for n in (a.type_node, a.constrained_node):
            if n not in ids:
                dangling.append(Violation("DanglingEndpoint", f"attachment -> {n}"))
    for s in graph.operation_scopes:
        for role, n in s.arg_bindings:
            if n not in ids:
                dangling.append(Violation("DanglingEndpoint", f"{s.operation} {role} -> {n}"))
    if graph.return_node is not None and graph.return_node not in ids:
        dangling.append(Violation("DanglingEndpoint", f"return node {graph.return_node}"))
    sizes = {"edge": len(graph.edges), "attachment": len(graph.type_attachments),
             "scope": len(graph.operation_scopes)}
    for ref in graph.elements + [r for s in graph.operation_scopes for r in s.scope]:
        if not 0 <= ref[1] < sizes.get(ref[0], 0):
            dangling.append(Violation("DanglingEndpoint", f"element {ref}"))

    out: list[Violation] = []
    uf = _UnionFind(ids)
    for a, b in connectivity_links(graph):
        if a in ids and b in ids:
            uf.union(a, b)
    roots = {uf.find(n) for n in ids}
    if len(roots) > 1:
        out.append(Violation("Disconnected", f"{len(roots)} components"))

    ruf = _UnionFind(ids)
    for e in graph.edges:
        if e.arg1 in ids and e.arg2 in ids and not ruf.union(e.arg1, e.arg2):
            out.append(Violation("Cyclic", f"{e.relation} closes a cycle"))

    out.extend(dangling)

    owners: dict[ElementRef, int] = {}
    for i, s in enumerate(graph.operation_scopes):
        if not s.scope:
            out.append(Violation("EmptyScope", s.operation))
        for ref in s.scope:
            if ref in owners:
                out.append(Violation("UnbalancedScope", f"{ref} in two scopes"))
            owners[ref] = i
    # nesting must be a forest
    for i in range(len(graph.operation_scopes)):
        seen = {i}
        cur = owners.get(("scope", i))
        while cur is not None:
            if cur in seen:
                out.append(Violation("UnbalancedScope", f"scope {i} contains itself"))
                break
            seen.add(cur)
            cur = owners.get(("scope", cur))
    return out


# --- isomorphism -----------------------------------------------------------

def _local_signature(graph: SemanticGraph, n: NodeId):
    node = graph.nodes[n]
    sig = Counter()
    for e in graph.edges:
        if e.arg1 == n:
            other = graph.nodes[e.arg2]
            sig[("out", e.relation, other.kind, other.label if other.kind is NodeKind.ENTITY else "")] += 1
        if e.arg2 == n:
            other = graph.nodes[e.arg1]
            sig[("in", e.relation, other.kind, other.label if other.kind is NodeKind.ENTITY else "")] += 1
    for t in graph.attachments_of(n):
        sig[("type", t)] += 1
    for s in graph.operation_scopes:
        for i, (role, m) in enumerate(s.arg_bindings):
            if m == n:
                sig[("role", s.operation, i, role)] += 1
    label = node.label if node.kind is NodeKind.ENTITY else ""
    # entity labels already identify entities; a missing type annotation is not a difference
    return (node.kind, label, frozenset(sig.items()), n == graph.return_node)


def _describe(graph: SemanticGraph, key: dict[NodeId, object]):
    def k(n):
        return key[n] if n in key else ("T", graph.nodes[n].label)

    def elem(ref):
        kind, i = ref
        if kind == "edge":
            e = graph.edges[i]
            return ("edge", e.relation, k(e.arg1), k(e.arg2))
        if kind == "attachment":
            a = graph.type_attachments[i]
            return ("att", graph.nodes[a.type_node].label, k(a.constrained_node))
        s = graph.operation_scopes[i]
        return ("scope", s.operation, tuple((r, k(n)) for r, n in s.arg_bindings),
                frozenset(Counter(elem(r) for r in s.scope).items()))

    attached = {a.type_node for a in graph.type_attachments}
    loose_types = Counter(n.label for n in graph.nodes
                          if n.kind is NodeKind.TYPE and n.id not in attached)
    top = Counter(elem(r) for r in graph.top_level())
    ret = key.get(graph.return_node) if graph.return_node is not None else None
    return top, loose_types, ret


def graphs_isomorphic(g1: SemanticGraph, g2: SemanticGraph) -> bool:
    """True iff a bijection between non-type nodes, fixing entity labels and
    renaming variables freely, maps g1 onto g2 (elements compared as
    multisets, so conjunct order does not matter)."""
    if (len(g1.nodes), len(g1.edges), len(g1.type_attachments), len(g1.operation_scopes)) != (
        len(g2.nodes), len(g2.edges), len(g2.type_attachments), len(g2.operation_scopes)
    ):
        return False
    if (g1.return_node is None) != (g2.return_node is None):
        return False
    movable1 = [n.id for n in g1.nodes if n.kind is not NodeKind.TYPE]
    movable2 = [n.id for n in g2.nodes if n.kind is not NodeKind.TYPE]
    if len(movable1) != len(movable2):
        return False
    sig1 = {n: _local_signature(g1, n) for n in movable1}
    sig2 = {n: _local_signature(g2, n) for n in movable2}
    if Counter(sig1.values()) != Counter(sig2.values()):
        return False

    adj1 = _edge_counts(g1)
    adj2 = _edge_counts(g2)
    target = _describe(g2, {n: n for n in movable2})
    order = sorted(movable1, key=lambda n: sum(1 for m in movable1 if sig1[m] == sig1[n]))
    mapping: dict[NodeId, NodeId] = {}
    used: set[NodeId] = set()

    def consistent(a: NodeId, b: NodeId) -> bool:
        for a2, b2 in list(mapping.items()) + [(a, b)]:
            if adj1.get((a, a2)) != adj2.get((b, b2)) or adj1.get((a2, a)) != adj2.get((b2, b)):
                return False
        return True

    def search(i: int) -> bool:
        if i == len(order):
            return _describe(g1, mapping) == target
        a = order[i]
        for b in movable2:
            if b in used or sig2[b] != sig1[a] or not consistent(a, b):
                continue
            mapping[a] = b
            used.add(b)
            if search(i + 1):
                return True
            del mapping[a]
            used.discard(b)
        return False

    return search(0)


def _edge_counts(graph: SemanticGraph) -> dict[tuple[NodeId, NodeId], Counter]:
    out: dict[tuple[NodeId, NodeId], Counter] = defaultdict(Counter)
    for e in graph.edges:
        out[(e.arg1, e.arg2)][e.relation] += 1
    return {k: v for k, v in out.items()}
