"""Corpus ingestion, entity replacement, SGD training and checkpoints."""

from __future__ import annotations

import hashlib
import json
import logging
import re
import struct
from collections import Counter
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .actions import (
    ADD_EDGE,
    ADD_ENTITY,
    ADD_TYPE,
    ADD_VARIABLE,
    ARG1,
    ARG2,
    END_OPERATION,
    START_OPERATION,
    TYPE_ARG,
    Action,
    argument,
    string_to_action,
    variable_label,
)
from .errors import (
    CorruptCheckpoint,
    DivergenceDetected,
    LFSyntaxError,
    Seq2ActError,
    UnresolvableEntity,
    VersionMismatch,
)
from .logical_form import (
    Answer,
    Conjunction,
    Const,
    EntityLit,
    OperatorApp,
    Relation,
    TypePred,
    entities_in,
    format_lf,
    lf_to_actions,
    parse_lf,
)
from .model import (
    UNK,
    ActionVocabulary,
    ModelConfig,
    ModelParameters,
    Vocabulary,
    init_params,
    loss_and_grads,
    parameter_shapes,
    sequence_log_prob,
)
from .schema import CONST_RELATION, KBSchema, parse_placeholder, placeholder

log = logging.getLogger(__name__)

_TOKEN_RE = re.compile(r"<[A-Za-z_][A-Za-z0-9_]*:\d+>|[A-Za-z0-9_']+")


def tokenize(text: str) -> list[str]:
    """Lower-cased word tokens; ``<type:k>`` placeholders pass through."""
    return [t if t.startswith("<") else t.lower() for t in _TOKEN_RE.findall(text)]


# --- corpus ------------------------------------------------------------------

def read_corpus(path: str | Path) -> list[tuple[str, str]]:
    """``utterance<TAB>logical form`` lines; blank lines are skipped."""
    pairs = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        if "\t" not in line:
            raise LFSyntaxError(f"line {lineno}: expected utterance<TAB>logical form", 0)
        utt, lf = line.split("\t", 1)
        pairs.append((utt, lf))
    return pairs


@dataclass(frozen=True)
class Mention:
    start: int
    end: int
    entity: str


def detect_mentions(tokens: Sequence[str], schema: KBSchema) -> list[Mention]:
    """Longest-match scan for entity names and aliases, left to right."""
    forms = {tuple(s.split()): name for s, name in schema.surface_forms().items()}
    longest = max((len(k) for k in forms), default=0)
    out = []
    i = 0
    while i < len(tokens):
        for n in range(min(longest, len(tokens) - i), 0, -1):
            name = forms.get(tuple(tokens[i:i + n]))
            if name is not None:
                out.append(Mention(i, i + n, name))
                i += n
                break
        else:
            i += 1
    return out


@dataclass(frozen=True)
class CorpusExample:
    tokens: tuple[str, ...]
    lf_text: str
    actions: tuple[Action, ...]
    substitutions: dict[str, str] = field(default_factory=dict, compare=False)


def replace_entities(tokens: Sequence[str], schema: KBSchema) -> tuple[list[str], dict[str, str]]:
    """Swap mentions for ``<type:k>`` placeholders, numbered per type by
    first appearance. Returns the new tokens and placeholder -> entity."""
    out: list[str] = []
    by_entity: dict[str, str] = {}
    counts: Counter = Counter()
    pos = 0
    for m in detect_mentions(tokens, schema):
        out.extend(tokens[pos:m.start])
        if m.entity not in by_entity:
            t = schema.entities[m.entity]
            by_entity[m.entity] = placeholder(t, counts[t])
            counts[t] += 1
        out.append(by_entity[m.entity])
        pos = m.end
    out.extend(tokens[pos:])
    return out, {ph: e for e, ph in by_entity.items()}


def _map_entities(lf: Answer, mapping: dict[str, str]) -> Answer:
    def ent(e):
        return EntityLit(e.type, mapping.get(e.name, e.name)) if isinstance(e, EntityLit) else e

    def term(t):
        if isinstance(t, TypePred):
            return TypePred(t.type, ent(t.term))
        if isinstance(t, Relation):
            return Relation(t.rel, ent(t.term1), ent(t.term2))
        if isinstance(t, Const):
            return Const(t.var, ent(t.entity))
        if isinstance(t, OperatorApp):
            return OperatorApp(t.op, t.roles, Conjunction(tuple(term(x) for x in t.body.terms)))
        return t

    return Answer(lf.var, Conjunction(tuple(term(t) for t in lf.body.terms)))


def substitute_lf(lf: Answer, mapping: dict[str, str]) -> Answer:
    """Rename entities in a logical form (either direction of the placeholder map)."""
    return _map_entities(lf, mapping)


def preprocess_example(utterance: str, lf_text: str, schema: KBSchema) -> CorpusExample:
    tokens, subs = replace_entities(tokenize(utterance), schema)
    lf = parse_lf(lf_text, schema)
    for e in entities_in(lf):
        if schema.entity_type(e.name) is None:
            raise UnresolvableEntity(f"entity {e.name!r} is neither mentioned nor declared")
    to_placeholder = {e: ph for ph, e in subs.items()}
    lf = _map_entities(lf, to_placeholder)
    actions = lf_to_actions(lf, schema)
    return CorpusExample(tuple(tokens), format_lf(lf), tuple(actions), subs)


@dataclass
class Vocabularies:
    words: Vocabulary
    actions: ActionVocabulary


def build_vocabularies(examples: Sequence[CorpusExample], schema: KBSchema | None = None,
                       min_count: int = 2) -> Vocabularies:
    """Words seen fewer than ``min_count`` times share the unknown-word
    vector; placeholders are always kept. Actions are those seen in
    training plus every action the schema makes expressible."""
    counts = Counter(t for ex in examples for t in ex.tokens)
    words = Vocabulary(
        sorted(t for t, c in counts.items() if c >= min_count or parse_placeholder(t)), unk=UNK
    )
    seen: list[Action] = []
    for ex in examples:
        seen.extend(ex.actions)
    actions = ActionVocabulary(sorted(set(seen)))
    if schema is not None:
        for a in schema_actions(schema, examples):
            actions.add(a)
    return Vocabularies(words, actions)


def schema_actions(schema: KBSchema, examples: Sequence[CorpusExample] = ()) -> list[Action]:
    n_vars = 1
    per_type: Counter = Counter()
    for ex in examples:
        n_vars = max(n_vars, sum(1 for a in ex.actions if a.structure == ADD_VARIABLE))
        for a in ex.actions:
            ph = parse_placeholder(a.semantic)
            if ph:
                per_type[ph[0]] = max(per_type[ph[0]], ph[1] + 1)
    variables = [variable_label(i) for i in range(n_vars)]
    nodes = variables + sorted(schema.entities)
    for t in sorted(schema.types):
        nodes += [placeholder(t, k) for k in range(max(per_type[t], 1))]
    out = [Action(ADD_VARIABLE, v) for v in variables]
    out += [Action(ADD_ENTITY, n) for n in nodes if n not in variables]
    out += [Action(ADD_TYPE, t) for t in sorted(schema.types)]
    out += [Action(ADD_EDGE, r) for r in sorted(schema.relations) + [CONST_RELATION]]
    roles: set[str] = set()
    for op, op_roles in sorted(schema.operations.items()):
        out += [Action(START_OPERATION, op), Action(END_OPERATION, op)]
        roles.update(op_roles)
    for n in nodes:
        out += [argument(TYPE_ARG, n), argument(ARG1, n), argument(ARG2, n)]
    for role in sorted(roles):
        out += [argument(role, v) for v in variables]
    return out


def preprocess(corpus: Iterable[tuple[str, str]], schema: KBSchema,
               min_count: int = 2) -> tuple[list[CorpusExample], Vocabularies]:
    examples = [preprocess_example(u, lf, schema) for u, lf in corpus]
    return examples, build_vocabularies(examples, schema, min_count)


def encode_example(ex: CorpusExample, vocabs: Vocabularies) -> tuple[list[int], list[int]]:
    words = vocabs.words.encode(ex.tokens)
    actions = [vocabs.actions[a] for a in ex.actions] + [0]  # 0 is the end marker
    return words, actions


# --- training ----------------------------------------------------------------

@dataclass(frozen=True)
class TrainSchedule:
    epochs: int = 30
    initial_lr: float = 0.1
    halve_after: int = 15
    halve_every: int = 5

    def lr(self, epoch: int) -> float:
        """Learning rate of 1-based ``epoch``."""
        if epoch <= self.halve_after:
            return self.initial_lr
        return self.initial_lr * 0.5 ** ((epoch - self.halve_after - 1) // self.halve_every + 1)

    def trace(self) -> list[float]:
        return [self.lr(e) for e in range(1, self.epochs + 1)]


@dataclass
class EpochMetrics:
    epoch: int
    lr: float
    loss: float

    def to_dict(self) -> dict:
        return {"epoch": self.epoch, "lr": self.lr, "loss": self.loss}


@dataclass
class TrainedModel:
    params: ModelParameters
    words: Vocabulary
    max_action_len: int
    metrics: list[EpochMetrics] = field(default_factory=list)

    @property
    def actions(self) -> ActionVocabulary:
        return self.params.actions


def _clip(grads: dict[str, np.ndarray], max_norm: float) -> None:
    norm = np.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if norm > max_norm:
        for g in grads.values():
            g *= max_norm / norm


def train(config: ModelConfig, examples: Sequence[CorpusExample], vocabs: Vocabularies,
          schedule: TrainSchedule = TrainSchedule(), seed: int = 0,
          clip_norm: float | None = None, params: ModelParameters | None = None,
          on_epoch: Callable[[EpochMetrics, ModelParameters], None] | None = None) -> TrainedModel:
    """Per-example SGD on the negative log-likelihood, order reshuffled
    every epoch by a generator seeded with ``seed``."""
    if not examples:
        raise ValueError("training corpus is empty")
    config = replace(config, n_words=len(vocabs.words))
    if params is None:
        params = init_params(config, vocabs.actions)
    else:
        params = params.copy()
    data = [encode_example(ex, vocabs) for ex in examples]
    rng = np.random.default_rng(seed)
    metrics = []
    for epoch in range(1, schedule.epochs + 1):
        lr = schedule.lr(epoch)
        total = 0.0
        for k in rng.permutation(len(data)):
            words, actions = data[k]
            loss, grads = loss_and_grads(params, words, actions)
            if not np.isfinite(loss):
                raise DivergenceDetected(f"non-finite loss in epoch {epoch}")
            if clip_norm is not None:
                _clip(grads, clip_norm)
            for name, g in grads.items():
                params.tensors[name] -= lr * g
            total += loss
        m = EpochMetrics(epoch, lr, total / len(data))
        if not np.isfinite(m.loss):
            raise DivergenceDetected(f"non-finite loss in epoch {epoch}")
        log.info("epoch %d lr %.4g loss %.5f", epoch, lr, m.loss)
        metrics.append(m)
        if on_epoch is not None:
            on_epoch(m, params)
    max_len = max(len(ex.actions) + 1 for ex in examples)
    return TrainedModel(params, vocabs.words, max_len, metrics)


def split_validation(examples: Sequence, fraction: float = 0.1, seed: int = 0):
    """Seeded (train, validation) split; validation gets ceil(fraction * n) items."""
    n = len(examples)
    k = int(np.ceil(fraction * n)) if n > 1 else 0
    order = np.random.default_rng(seed).permutation(n)
    val = sorted(order[:k].tolist())
    rest = sorted(order[k:].tolist())
    return [examples[i] for i in rest], [examples[i] for i in val]


def validation_log_likelihood(model: TrainedModel, examples: Sequence[CorpusExample]) -> float:
    vocabs = Vocabularies(model.words, model.actions)
    total = 0.0
    for ex in examples:
        if any(a not in model.actions for a in ex.actions):
            return float("-inf")
        words, actions = encode_example(ex, vocabs)
        total += sequence_log_prob(model.params, words, actions)
    return total / max(len(examples), 1)


def tune_action_dims(candidates: Iterable[tuple[int, int]], examples: Sequence[CorpusExample],
                     vocabs: Vocabularies, config: ModelConfig = ModelConfig(),
                     schedule: TrainSchedule = TrainSchedule(), seed: int = 0):
    """Pick (structure dim, semantic dim) by held-out log-likelihood on a
    10% validation split. Returns the best pair and all scores."""
    train_part, val_part = split_validation(examples, 0.1, seed)
    scores = {}
    for ds, dm in candidates:
        cfg = replace(config, struct_embed_dim=ds, sem_embed_dim=dm)
        model = train(cfg, train_part, vocabs, schedule, seed)
        scores[(ds, dm)] = validation_log_likelihood(model, val_part)
    best = max(scores, key=lambda k: (scores[k], -k[0], -k[1]))
    return best, scores


# --- checkpoints -------------------------------------------------------------

MAGIC = b"S2ACKPT\x00"
FORMAT_VERSION = 1
_DIGEST = 32


def _vocab_hash(words: Vocabulary, actions: ActionVocabulary) -> str:
    h = hashlib.sha256()
    h.update(words.digest().encode())
    h.update(actions.digest().encode())
    return h.hexdigest()


def checkpoint_bytes(model: TrainedModel) -> bytes:
    params = model.params
    shapes = parameter_shapes(params.config)
    header = {
        "version": FORMAT_VERSION,
        "config": params.config.to_dict(),
        "words": model.words.to_list(),
        "actions": params.actions.to_list(),
        "vocab_hash": _vocab_hash(model.words, params.actions),
        "max_action_len": model.max_action_len,
        "metrics": [m.to_dict() for m in model.metrics],
        "tensors": [[name, list(shapes[name])] for name in sorted(shapes)],
    }
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    parts = [MAGIC, struct.pack("<I", FORMAT_VERSION), struct.pack("<Q", len(head)), head]
    for name in sorted(shapes):
        t = params.tensors[name]
        if t.shape != shapes[name]:
            raise ValueError(f"tensor {name} has shape {t.shape}, expected {shapes[name]}")
        parts.append(np.ascontiguousarray(t, dtype="<f8").tobytes(order="C"))
    body = b"".join(parts)
    return body + hashlib.sha256(body).digest()


def save_checkpoint(model: TrainedModel, path: str | Path) -> None:
    Path(path).write_bytes(checkpoint_bytes(model))


def load_checkpoint(path: str | Path, expect_vocab_hash: str | None = None) -> TrainedModel:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise CorruptCheckpoint(f"cannot read {path}: {exc}") from exc
    return checkpoint_from_bytes(data, expect_vocab_hash)


def checkpoint_from_bytes(data: bytes, expect_vocab_hash: str | None = None) -> TrainedModel:
    if len(data) < len(MAGIC) + 12 + _DIGEST or not data.startswith(MAGIC):
        raise CorruptCheckpoint("not a checkpoint file")
    body, digest = data[:-_DIGEST], data[-_DIGEST:]
    if hashlib.sha256(body).digest() != digest:
        raise CorruptCheckpoint("checksum mismatch")
    off = len(MAGIC)
    (version,) = struct.unpack_from("<I", body, off)
    if version != FORMAT_VERSION:
        raise VersionMismatch(f"checkpoint format {version}, this build reads {FORMAT_VERSION}")
    (head_len,) = struct.unpack_from("<Q", body, off + 4)
    off += 12
    try:
        header = json.loads(body[off:off + head_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptCheckpoint(f"bad header: {exc}") from exc
    off += head_len
    words = Vocabulary(header["words"][1:], unk=header["words"][0])
    try:
        actions = ActionVocabulary(string_to_action(t) for t in header["actions"][1:])
    except Seq2ActError as exc:
        raise CorruptCheckpoint(f"bad action table: {exc}") from exc
    found = _vocab_hash(words, actions)
    if found != header["vocab_hash"]:
        raise CorruptCheckpoint("vocabulary does not match its recorded hash")
    if expect_vocab_hash is not None and found != expect_vocab_hash:
        raise VersionMismatch("checkpoint was trained with a different vocabulary")
    config = ModelConfig.from_dict(header["config"])
    tensors = {}
    for name, shape in header["tensors"]:
        n = int(np.prod(shape))
        chunk = body[off:off + 8 * n]
        if len(chunk) != 8 * n:
            raise CorruptCheckpoint(f"tensor {name} is truncated")
        tensors[name] = np.frombuffer(chunk, dtype="<f8").astype(np.float64).reshape(shape)
        off += 8 * n
    if off != len(body):
        raise CorruptCheckpoint("trailing bytes after tensors")
    metrics = [EpochMetrics(**m) for m in header.get("metrics", [])]
    params = ModelParameters(config, tensors, actions)
    return TrainedModel(params, words, header["max_action_len"], metrics)


def vocabulary_hash(model: TrainedModel) -> str:
    return _vocab_hash(model.words, model.actions)
