"""Synthetic data: the bundled toy geography corpus and random logical forms.

The corpus is produced from question templates with a seeded generator,
so the shipped TSV files can be regenerated byte for byte.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .actions import variable_label
from .logical_form import (
    Answer,
    Conjunction,
    Const,
    EntityLit,
    OperatorApp,
    Relation,
    TypePred,
    Var,
)
from .schema import KBSchema, load_schema

DATA_DIR = Path(str(resources.files("seq2act") / "data"))
TOY_SCHEMA = DATA_DIR / "geo_toy.schema"
TOY_TRAIN = DATA_DIR / "geo_toy_train.tsv"
TOY_TEST = DATA_DIR / "geo_toy_test.tsv"


def toy_schema() -> KBSchema:
    return load_schema(TOY_SCHEMA.read_text(encoding="utf-8"))


@dataclass(frozen=True)
class Template:
    slots: tuple[str, ...]
    paraphrases: tuple[str, ...]
    lf: str


S, C, R = "state", "city", "river"

TEMPLATES: tuple[Template, ...] = (
    Template((S,), ("which states border {0}", "what states are next to {0}",
                    "name the states bordering {0}", "states adjacent to {0}"),
             "answer(A,(state(A),next_to(A,stateid({0}))))"),
    Template((S,), ("how many states border {0}", "what is the number of states bordering {0}"),
             "answer(A,count(B,(state(B),next_to(B,stateid({0}))),A))"),
    Template((S,), ("count the states that neighbor {0}",),
             "answer(A,count(B,(const(C,stateid({0})),next_to(C,B),state(B)),A))"),
    Template((S,), ("what is the capital of {0}", "capital of {0}", "which city is the capital of {0}"),
             "answer(A,(city(A),capital(stateid({0}),A)))"),
    Template((S,), ("which cities are in {0}", "what cities are located in {0}",
                    "list the cities in {0}"),
             "answer(A,(city(A),loc(A,stateid({0}))))"),
    Template((S,), ("how many cities are in {0}", "how many cities does {0} have"),
             "answer(A,count(B,(city(B),loc(B,stateid({0}))),A))"),
    Template((S,), ("which rivers run through {0}", "what rivers traverse {0}",
                    "what rivers flow through {0}"),
             "answer(A,(river(A),traverse(A,stateid({0}))))"),
    Template((S,), ("how many rivers run through {0}", "how many rivers are in {0}"),
             "answer(A,count(B,(river(B),traverse(B,stateid({0}))),A))"),
    Template((R,), ("which states does the {0} run through", "what states does the {0} traverse",
                    "through which states does the {0} flow"),
             "answer(A,(state(A),traverse(riverid({0}),A)))"),
    Template((S,), ("what is the population of {0}", "how many people live in {0}"),
             "answer(A,population(stateid({0}),A))"),
    Template((S,), ("what is the area of {0}", "how big is {0}"),
             "answer(A,area(stateid({0}),A))"),
    Template((S,), ("what is the highest point of {0}", "what is the highest mountain in {0}"),
             "answer(A,(mountain(A),high_point(stateid({0}),A)))"),
    Template((C,), ("which state is {0} in", "where is {0}", "in which state is {0}"),
             "answer(A,(state(A),loc(cityid({0}),A)))"),
    Template((S,), ("which states do not border {0}", "what states are not next to {0}"),
             "answer(A,(state(A),not(next_to(A,stateid({0})))))"),
    Template((S,), ("what is the largest state bordering {0}", "biggest state next to {0}"),
             "answer(A,largest(A,(state(A),next_to(A,stateid({0})))))"),
    Template((S,), ("what is the smallest state bordering {0}", "smallest state next to {0}"),
             "answer(A,smallest(A,(state(A),next_to(A,stateid({0})))))"),
    Template((), ("which state borders the most states", "what state has the most neighbors"),
             "answer(A,most(A,B,(state(A),next_to(A,B),state(B))))"),
    Template((), ("what is the largest state", "which state is the biggest"),
             "answer(A,largest(A,state(A)))"),
    Template((S,), ("what is the capital of the states bordering {0}",
                    "capitals of states next to {0}"),
             "answer(A,(city(A),capital(B,A),state(B),next_to(B,stateid({0}))))"),
    Template((S,), ("which rivers run through states bordering {0}",
                    "what rivers flow through states next to {0}"),
             "answer(A,(river(A),traverse(A,B),state(B),next_to(B,stateid({0}))))"),
    Template((S, S), ("which rivers run through {0} and {1}", "what rivers traverse both {0} and {1}"),
             "answer(A,(river(A),traverse(A,stateid({0})),traverse(A,stateid({1}))))"),
    Template((S,), ("what is the combined area of the states bordering {0}",
                    "total area of states next to {0}"),
             "answer(A,sum(B,C,(state(B),next_to(B,stateid({0})),area(B,C)),A))"),
    Template((R,), ("which states border states that the {0} runs through",
                    "states adjacent to states the {0} traverses"),
             "answer(A,(state(A),next_to(A,B),state(B),traverse(riverid({0}),B)))"),
)


def surface(name: str) -> str:
    return name.replace("_", " ")


def _entities_by_type(schema: KBSchema) -> dict[str, list[str]]:
    out: dict[str, list[str]] = {}
    for name, t in schema.entities.items():
        out.setdefault(t, []).append(name)
    return out


def generate_corpus(n: int, seed: int, schema: KBSchema | None = None) -> list[tuple[str, str]]:
    """``n`` (utterance, logical form) pairs drawn round-robin over templates."""
    schema = schema or toy_schema()
    rng = random.Random(seed)
    pools = _entities_by_type(schema)
    out = []
    for i in range(n):
        tpl = TEMPLATES[i % len(TEMPLATES)]
        names: list[str] = []
        for t in tpl.slots:
            names.append(rng.choice([e for e in pools[t] if e not in names]))
        text = rng.choice(tpl.paraphrases).format(*[surface(x) for x in names])
        out.append((text, tpl.lf.format(*names)))
    rng.shuffle(out)
    return out


def toy_split(seed: int = 7) -> tuple[list[tuple[str, str]], list[tuple[str, str]]]:
    """The 200/50 train/test split shipped with the package."""
    pairs = generate_corpus(250, seed)
    return pairs[:200], pairs[200:]


def format_tsv(pairs) -> str:
    return "".join(f"{u}\t{lf}\n" for u, lf in pairs)


def write_toy_corpus(directory: str | Path = DATA_DIR, seed: int = 7) -> None:
    train, test = toy_split(seed)
    Path(directory, "geo_toy_train.tsv").write_text(format_tsv(train), encoding="utf-8")
    Path(directory, "geo_toy_test.tsv").write_text(format_tsv(test), encoding="utf-8")


# --- random logical forms ----------------------------------------------------

class _LFBuilder:
    def __init__(self, rng: random.Random, schema: KBSchema, max_depth: int):
        self.rng = rng
        self.schema = schema
        self.max_depth = max_depth
        self.n_vars = 0
        self.used_entities: set[str] = set()
        self.pools = _entities_by_type(schema)
        # relations grouped by which argument position a type can fill
        self.by_arg: dict[str, list[tuple[str, int, str]]] = {}
        for rel, (t1, t2) in sorted(schema.relations.items()):
            self.by_arg.setdefault(t1, []).append((rel, 0, t2))
            self.by_arg.setdefault(t2, []).append((rel, 1, t1))

    def fresh(self) -> Var:
        v = Var(variable_label(self.n_vars))
        self.n_vars += 1
        return v

    def entity(self, t: str) -> EntityLit | None:
        free = [e for e in self.pools.get(t, []) if e not in self.used_entities]
        if not free:
            return None
        name = self.rng.choice(free)
        self.used_entities.add(name)
        return EntityLit(t, name)

    def about(self, v: Var, t: str, depth: int, typed: bool = True) -> list:
        """Conjuncts constraining variable ``v`` of type ``t``."""
        rng = self.rng
        terms: list = [TypePred(t, v)] if typed else []
        options = self.by_arg.get(t, [])
        n_rel = rng.randint(0 if terms else 1, 2) if depth > 0 and options else 0
        for _ in range(n_rel):
            rel, pos, other_t = rng.choice(options)
            terms.extend(self.neighbour(v, rel, pos, other_t, depth - 1))
        if not terms:
            terms = [TypePred(t, v)]
        if depth > 0 and rng.random() < 0.25:
            terms = self.wrap(v, t, terms, depth - 1)
        return terms

    def neighbour(self, v: Var, rel: str, pos: int, other_t: str, depth: int) -> list:
        rng = self.rng
        choice = rng.random()
        ent = self.entity(other_t) if choice < 0.45 else None
        if ent is not None:
            if rng.random() < 0.2:
                c = self.fresh()
                link = Relation(rel, v, c) if pos == 0 else Relation(rel, c, v)
                return [Const(c, ent), link]
            return [Relation(rel, v, ent) if pos == 0 else Relation(rel, ent, v)]
        w = self.fresh()
        link = Relation(rel, v, w) if pos == 0 else Relation(rel, w, v)
        return [link] + self.about(w, other_t, depth, typed=rng.random() < 0.7)

    def wrap(self, v: Var, t: str, terms: list, depth: int) -> list:
        rng = self.rng
        ops = [op for op in ("not", "largest", "smallest", "most") if op in self.schema.operations]
        op = rng.choice(ops)
        if op == "not":
            if len(terms) < 2:
                return terms
            k = rng.randint(1, len(terms) - 1)
            return terms[:k] + [OperatorApp("not", (), Conjunction(tuple(terms[k:])))]
        if op == "most":
            options = [o for o in self.by_arg.get(t, []) if o[1] == 0]
            if not options:
                return terms
            rel, _, other_t = rng.choice(options)
            w = self.fresh()
            inner = terms + [Relation(rel, v, w)] + self.about(w, other_t, min(depth, 1))
            roles = (("arg-for", v), ("arg-for", w))
            return [OperatorApp("most", roles, Conjunction(tuple(inner)))]
        return [OperatorApp(op, (("arg-for", v),), Conjunction(tuple(terms)))]

    def build(self) -> Answer:
        rng = self.rng
        a = self.fresh()
        roll = rng.random()
        types = sorted(t for t in self.schema.types if t in self.by_arg)
        if roll < 0.15 and "count" in self.schema.operations:
            b = self.fresh()
            t = rng.choice(types)
            body = self.about(b, t, self.max_depth - 1)
            op = OperatorApp("count", (("arg-for", b), ("arg-return", a)), Conjunction(tuple(body)))
            return Answer(a, Conjunction((op,)))
        t = rng.choice(types)
        return Answer(a, Conjunction(tuple(self.about(a, t, self.max_depth))))


def random_lf(rng: random.Random, schema: KBSchema | None = None, max_depth: int = 4) -> Answer:
    """A tree-shaped, schema-consistent logical form of nesting depth at most ``max_depth``."""
    return _LFBuilder(rng, schema or toy_schema(), max_depth).build()


if __name__ == "__main__":  # pragma: no cover
    write_toy_corpus()
