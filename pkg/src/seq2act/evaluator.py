"""Exact-match accuracy and the length comparison between logical forms
and action sequences."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

from .actions import Action
from .errors import LineCountMismatch, Seq2ActError
from .graph import graphs_isomorphic
from .logical_form import Answer, format_lf, lf_to_actions, lf_to_graph, linearize, parse_lf, print_lf
from .schema import KBSchema


def _as_lf(x: Answer | str, schema: KBSchema | None) -> Answer:
    return parse_lf(x, schema) if isinstance(x, str) else x


def exact_match(predicted: Answer | str, gold: Answer | str, schema: KBSchema | None = None) -> bool:
    """Equal canonical prints, or isomorphic graphs (renaming, conjunct order)."""
    try:
        p = _as_lf(predicted, schema)
        g = _as_lf(gold, schema)
    except Seq2ActError:
        return False
    if print_lf(p, schema) == print_lf(g, schema):
        return True
    try:
        return graphs_isomorphic(lf_to_graph(p, schema), lf_to_graph(g, schema))
    except Seq2ActError:
        return False


def string_match(predicted: Answer | str, gold: Answer | str, schema: KBSchema | None = None) -> bool:
    try:
        return print_lf(_as_lf(predicted, schema), schema) == print_lf(_as_lf(gold, schema), schema)
    except Seq2ActError:
        return False


def lf_length(lf: Answer | str) -> int:
    text = lf if isinstance(lf, str) else format_lf(lf)
    return len(linearize(text))


def length_stats(corpus: Iterable[tuple[Answer | str, Sequence[Action] | None]],
                 schema: KBSchema | None = None) -> tuple[float, float]:
    """Mean linearised logical-form length and mean action count.

    Items are ``(logical form, actions)``; when ``actions`` is ``None`` it
    is derived by conversion.
    """
    lf_total = act_total = n = 0
    for lf, actions in corpus:
        if actions is None:
            actions = lf_to_actions(_as_lf(lf, schema), schema)
        lf_total += lf_length(lf)
        act_total += len(actions)
        n += 1
    if n == 0:
        return 0.0, 0.0
    return lf_total / n, act_total / n


@dataclass
class Verdict:
    index: int
    predicted: str | None
    gold: str
    correct: bool
    string_correct: bool
    error: str | None = None


@dataclass
class EvalReport:
    correct: int
    total: int
    string_correct: int
    mean_lf_length: float
    mean_action_length: float
    verdicts: list[Verdict] = field(default_factory=list)

    @property
    def accuracy(self) -> float:
        return self.correct / self.total if self.total else 0.0

    @property
    def string_accuracy(self) -> float:
        return self.string_correct / self.total if self.total else 0.0

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "correct": self.correct,
            "total": self.total,
            "string_accuracy": self.string_accuracy,
            "mean_lf_length": self.mean_lf_length,
            "mean_action_length": self.mean_action_length,
            "verdicts": [asdict(v) for v in self.verdicts],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_table(self) -> str:
        rows = [
            ("accuracy (graph match)", f"{self.accuracy:.4f}"),
            ("accuracy (string match)", f"{self.string_accuracy:.4f}"),
            ("correct / total", f"{self.correct} / {self.total}"),
            ("mean logical-form length", f"{self.mean_lf_length:.2f}"),
            ("mean action-sequence length", f"{self.mean_action_length:.2f}"),
        ]
        width = max(len(k) for k, _ in rows)
        return "\n".join(f"{k.ljust(width)}  {v}" for k, v in rows) + "\n"


def evaluate(predictions: Sequence[str | None], gold: Sequence[str],
             schema: KBSchema | None = None) -> EvalReport:
    """Compare aligned predictions (``None`` or empty for a failed parse) with gold."""
    if len(predictions) != len(gold):
        raise LineCountMismatch(f"{len(predictions)} predictions for {len(gold)} gold forms")
    verdicts = []
    lengths = []
    for i, (p, g) in enumerate(zip(predictions, gold)):
        try:
            g_lf = parse_lf(g, schema)
            lengths.append((g, lf_to_actions(g_lf, schema)))
        except Seq2ActError as exc:
            verdicts.append(Verdict(i, p, g, False, False, f"gold: {exc.code}"))
            continue
        if not p:
            verdicts.append(Verdict(i, p, g, False, False, "no prediction"))
            continue
        verdicts.append(Verdict(i, p, g, exact_match(p, g_lf, schema), string_match(p, g_lf, schema)))
    lf_mean, act_mean = length_stats(lengths, schema)
    return EvalReport(
        correct=sum(v.correct for v in verdicts),
        total=len(verdicts),
        string_correct=sum(v.string_correct for v in verdicts),
        mean_lf_length=lf_mean,
        mean_action_length=act_mean,
        verdicts=verdicts,
    )
