"""Constrained beam search over action sequences."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .actions import EOS, Action, PartialGraphState, apply_action, build_graph
from .controller import ConstraintLevel, check_action
from .errors import EmptySentence, NoCompleteParse, Seq2ActError
from .graph import SemanticGraph
from .logical_form import actions_to_lf, print_lf
from .model import DecoderState, ModelParameters, decode_step, encode, init_decoder
from .schema import KBSchema
from .trainer import replace_entities, substitute_lf, tokenize


@dataclass(frozen=True)
class BeamItem:
    actions: tuple[int, ...]
    score: float
    dec_state: DecoderState
    graph_state: PartialGraphState
    attention: tuple[np.ndarray, ...]
    log_probs: np.ndarray | None = field(default=None, repr=False)


@dataclass
class SearchOutcome:
    completed: list[BeamItem]
    diagnostics: list[dict]


@dataclass
class ParseResult:
    actions: list[Action]
    score: float
    graph: SemanticGraph | None
    logical_form: str | None
    attention: list[np.ndarray]
    diagnostics: list[dict]
    substitutions: dict[str, str] = field(default_factory=dict)
    error: str | None = None

    @property
    def action_text(self) -> str:
        return " ".join(str(a) for a in self.actions)


class _Ranker:
    """Orders action ids by score, ties by action text."""

    def __init__(self, params: ModelParameters):
        texts = [str(a) for a in params.actions.actions]
        order = sorted(range(len(texts)), key=lambda i: texts[i])
        self.text_rank = np.empty(len(texts), dtype=np.int64)
        self.text_rank[order] = np.arange(len(texts))
        self.texts = texts


def _log(probs: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(probs)


def expand(item: BeamItem, log_probs: np.ndarray, legal, beam_size: int, ranker: _Ranker,
           candidates: Sequence[int] | None = None, filtered: dict | None = None,
           exhaustive: bool = False) -> list[tuple[float, int]]:
    """Best ``beam_size`` legal extensions of ``item`` as (score, action id).

    ``legal(action_id)`` returns a verdict. Rejected actions are skipped
    without renormalising the remaining mass. With ``exhaustive`` every
    candidate is checked (for diagnostics), not only until the quota fills.
    """
    ids = np.arange(len(log_probs)) if candidates is None else np.asarray(candidates)
    order = ids[np.lexsort((ranker.text_rank[ids], -log_probs[ids]))]
    out = []
    for a in order:
        a = int(a)
        if len(out) >= beam_size and not exhaustive:
            break
        verdict = legal(a)
        if not verdict.allowed:
            if filtered is not None:
                filtered[ranker.texts[a]] = verdict.violated_rule
            continue
        if len(out) < beam_size:
            out.append((item.score + float(log_probs[a]), a))
    return out


def beam_search(params: ModelParameters, schema: KBSchema | None, word_ids: Sequence[int],
                beam_size: int = 5, level: ConstraintLevel | str = ConstraintLevel.C1C2,
                max_steps: int = 60, candidates: Sequence[int] | None = None,
                explain: bool = False) -> SearchOutcome:
    """Completed items, best first. ``candidates`` restricts the action ids
    considered at every step (all actions by default)."""
    if beam_size < 1:
        raise ValueError("beam size must be at least 1")
    level = ConstraintLevel.parse(level)
    ranker = _Ranker(params)
    vocab = params.actions.actions
    enc = encode(params, word_ids)
    probs, dec, attn = decode_step(params, enc, init_decoder(params, enc))
    live = [BeamItem((), 0.0, dec, PartialGraphState.empty(schema), (attn,), _log(probs))]
    completed: list[BeamItem] = []
    diagnostics: list[dict] = []

    def sort_key(score: float, seq: tuple[int, ...]):
        return (-score, tuple(ranker.text_rank[a] for a in seq))

    for step in range(max_steps):
        pool = []
        filtered: dict[str, str] = {}
        for item in live:
            def legal(a, st=item.graph_state):
                return check_action(st, vocab[a], schema, level)
            for score, a in expand(item, item.log_probs, legal, beam_size, ranker,
                                   candidates, filtered, exhaustive=explain):
                pool.append((sort_key(score, item.actions + (a,)), score, item, a))
        pool.sort(key=lambda t: t[0])
        chosen = pool[:beam_size]
        if explain:
            diagnostics.append({
                "step": step,
                "candidates": [[" ".join(ranker.texts[x] for x in it.actions + (a,)), s]
                               for _, s, it, a in chosen],
                "filtered": dict(sorted(filtered.items())),
                "attention": [round(float(x), 6) for x in live[0].attention[-1]] if live else [],
            })
        new_live = []
        for _, score, item, a in chosen:
            action = vocab[a]
            if action == EOS:
                completed.append(BeamItem(item.actions + (a,), score, item.dec_state,
                                          item.graph_state, item.attention))
                continue
            try:
                gstate = apply_action(item.graph_state, action)
            except Seq2ActError:
                continue
            probs, dec, attn = decode_step(params, enc, item.dec_state, a)
            new_live.append(BeamItem(item.actions + (a,), score, dec, gstate,
                                     item.attention + (attn,), _log(probs)))
        live = new_live
        if not live:
            break
        if completed:
            best_done = max(c.score for c in completed)
            if max(it.score for it in live) <= best_done:
                break
    completed.sort(key=lambda c: sort_key(c.score, c.actions))
    return SearchOutcome(completed, diagnostics)


def result_from_actions(actions: list[Action], score: float, schema: KBSchema | None,
                        substitutions: dict[str, str] | None = None,
                        attention: list[np.ndarray] | None = None,
                        diagnostics: list[dict] | None = None) -> ParseResult:
    subs = substitutions or {}
    graph = lf_text = error = None
    try:
        graph = build_graph(actions, schema)
        lf = substitute_lf(actions_to_lf(actions, schema), subs)
        lf_text = print_lf(lf, schema)
    except Seq2ActError as exc:
        error = f"{exc.code}: {exc}"
    return ParseResult(actions, score, graph, lf_text, attention or [], diagnostics or [],
                       subs, error)


def parse(model, schema: KBSchema | None, sentence: str, beam_size: int = 5,
          level: ConstraintLevel | str = ConstraintLevel.C1C2, explain: bool = False,
          max_steps: int | None = None) -> ParseResult:
    """Parse raw text with a trained model (see ``trainer.TrainedModel``)."""
    tokens = tokenize(sentence)
    if not tokens:
        raise EmptySentence("empty input")
    subs: dict[str, str] = {}
    if schema is not None:
        tokens, subs = replace_entities(tokens, schema)
    word_ids = model.words.encode(tokens)
    budget = max_steps if max_steps is not None else 3 * model.max_action_len
    outcome = beam_search(model.params, schema, word_ids, beam_size, level, budget, explain=explain)
    if not outcome.completed:
        raise NoCompleteParse(f"no complete parse within {budget} steps")
    best = outcome.completed[0]
    vocab = model.params.actions.actions
    actions = [vocab[a] for a in best.actions if vocab[a] != EOS]
    return result_from_actions(actions, best.score, schema, subs, list(best.attention),
                               outcome.diagnostics)


def diagnostics_jsonl(result: ParseResult) -> str:
    return "".join(json.dumps(d, sort_keys=True) + "\n" for d in result.diagnostics)
