"""Command-line entry point: ``seq2act {convert,validate,train,parse,eval}``.

Exit status is 0 on success, 1 when input data is bad (per-line reports go
to stderr) and 2 for usage or configuration problems such as a missing file.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Sequence, TextIO

from .actions import format_actions, parse_actions
from .controller import ConstraintLevel
from .decoder import diagnostics_jsonl, parse
from .errors import ParseError, Seq2ActError
from .evaluator import evaluate
from .graph import validate_wellformed
from .logical_form import actions_to_lf, lf_to_actions, lf_to_graph, parse_lf, print_lf
from .model import ModelConfig
from .schema import KBSchema, load_schema_file, semantic_violations
from .trainer import (
    EpochMetrics,
    TrainSchedule,
    TrainedModel,
    load_checkpoint,
    preprocess,
    save_checkpoint,
    train,
)

log = logging.getLogger("seq2act")

EXIT_OK, EXIT_DATA, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    """Bad flags, missing files or unreadable configuration (exit 2)."""


@dataclass
class RunConfig:
    schema: Path | None
    corpus: list[Path]
    checkpoint: Path | None
    level: ConstraintLevel
    beam: int
    seed: int
    model: ModelConfig
    epochs: int
    lr: float

    @classmethod
    def from_args(cls, args: argparse.Namespace) -> "RunConfig":
        def existing(p):
            if p is None:
                return None
            path = Path(p)
            if not path.is_file():
                raise UsageError(f"file not found: {path}")
            return path

        level = getattr(args, "level", "c1c2")
        try:
            level = ConstraintLevel.parse(level)
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
        beam = getattr(args, "beam", 5)
        if beam < 1:
            raise UsageError("--beam must be at least 1")
        schema = existing(args.schema)
        corpus = [existing(p) for p in getattr(args, "inputs", None) or []]
        try:
            model = ModelConfig(
                hidden_size=getattr(args, "hidden", 200),
                word_embed_dim=getattr(args, "word_dim", 100),
                struct_embed_dim=getattr(args, "struct_dim", 50),
                sem_embed_dim=getattr(args, "sem_dim", 50),
                seed=args.seed,
            )
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
        epochs = getattr(args, "epochs", 30)
        if epochs < 1:
            raise UsageError("--epochs must be at least 1")
        return cls(
            schema=schema,
            corpus=corpus,
            checkpoint=Path(args.checkpoint) if getattr(args, "checkpoint", None) else None,
            level=level,
            beam=beam,
            seed=args.seed,
            model=model,
            epochs=epochs,
            lr=getattr(args, "lr", 0.1),
        )

    def load_schema(self) -> KBSchema | None:
        if self.schema is None:
            return None
        try:
            return load_schema_file(self.schema)
        except Seq2ActError as exc:
            raise UsageError(f"{self.schema}: {exc.code}: {exc}") from exc


# --- line-oriented IO --------------------------------------------------------

def _records(path: Path) -> Iterator[tuple[int, str, str]]:
    """``(line number, prefix, payload)`` for every non-blank line.

    The payload is the last tab-separated column; the prefix keeps the rest
    (including its trailing tab) so the line can be rewritten in place.
    """
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        head, sep, tail = line.rpartition("\t")
        yield lineno, head + sep, tail


def _report(lineno: int, exc: Seq2ActError, stream: TextIO) -> None:
    print(f"line {lineno}: {exc.code}: {exc}", file=stream)


class _Output:
    def __init__(self, path: str | None):
        self.path = path

    def __enter__(self) -> TextIO:
        self.fh = open(self.path, "w", encoding="utf-8") if self.path else sys.stdout
        return self.fh

    def __exit__(self, *exc) -> None:
        if self.path:
            self.fh.close()
        else:
            self.fh.flush()


# --- commands ----------------------------------------------------------------

def cmd_convert(args: argparse.Namespace) -> int:
    cfg = RunConfig.from_args(args)
    schema = cfg.load_schema()
    failures = 0
    with _Output(args.out) as out:
        for path in cfg.corpus:
            for lineno, prefix, payload in _records(path):
                try:
                    if args.to == "actions":
                        converted = format_actions(lf_to_actions(parse_lf(payload, schema), schema))
                    else:
                        converted = print_lf(actions_to_lf(parse_actions(payload), schema), schema)
                except Seq2ActError as exc:
                    failures += 1
                    _report(lineno, exc, sys.stderr)
                    continue
                out.write(f"{prefix}{converted}\n")
    return EXIT_DATA if failures else EXIT_OK


def cmd_validate(args: argparse.Namespace) -> int:
    cfg = RunConfig.from_args(args)
    if cfg.schema is None:
        raise UsageError("validate needs --schema")
    try:
        schema = load_schema_file(cfg.schema)
    except Seq2ActError as exc:
        print(f"{cfg.schema}: {exc.code}: {exc}", file=sys.stderr)
        return EXIT_DATA
    failures = checked = 0
    for path in cfg.corpus:
        for lineno, _, payload in _records(path):
            checked += 1
            try:
                lf = parse_lf(payload, schema, strict=True)
                graph = lf_to_graph(lf, schema)
                problems = [v.rule for v in validate_wellformed(graph)]
                problems += [rule for rule, _ in semantic_violations(graph, schema)]
                lf_to_actions(lf, schema)
            except Seq2ActError as exc:
                failures += 1
                _report(lineno, exc, sys.stderr)
                continue
            if problems:
                failures += 1
                print(f"line {lineno}: {', '.join(sorted(set(problems)))}", file=sys.stderr)
    print(f"schema ok: {len(schema.types)} types, {len(schema.entities)} entities, "
          f"{len(schema.relations)} relations; {checked - failures}/{checked} lines valid")
    return EXIT_DATA if failures else EXIT_OK


def _read_pairs(paths: Sequence[Path]) -> list[tuple[str, str]]:
    pairs = []
    for path in paths:
        for lineno, prefix, payload in _records(path):
            if not prefix:
                raise ParseError(f"line {lineno}: expected utterance<TAB>logical form")
            pairs.append((prefix[:-1].split("\t")[-1], payload))
    return pairs


def cmd_train(args: argparse.Namespace) -> int:
    cfg = RunConfig.from_args(args)
    if cfg.schema is None or not cfg.corpus or cfg.checkpoint is None:
        raise UsageError("train needs --schema, --corpus and --checkpoint")
    schema = cfg.load_schema()
    try:
        examples, vocabs = preprocess(_read_pairs(cfg.corpus), schema)
    except Seq2ActError as exc:
        print(f"{exc.code}: {exc}", file=sys.stderr)
        return EXIT_DATA
    metrics_path = Path(args.metrics) if args.metrics else cfg.checkpoint.with_suffix(".metrics.jsonl")
    metrics_path.write_text("", encoding="utf-8")

    def on_epoch(m: EpochMetrics, _params) -> None:
        with metrics_path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(m.to_dict(), sort_keys=True) + "\n")

    schedule = TrainSchedule(epochs=cfg.epochs, initial_lr=cfg.lr)
    try:
        model = train(cfg.model, examples, vocabs, schedule, seed=cfg.seed, on_epoch=on_epoch)
    except Seq2ActError as exc:
        print(f"{exc.code}: {exc}", file=sys.stderr)
        return EXIT_DATA
    save_checkpoint(model, cfg.checkpoint)
    log.info("wrote %s and %s", cfg.checkpoint, metrics_path)
    return EXIT_OK


def _load_model(cfg: RunConfig) -> TrainedModel:
    if cfg.checkpoint is None:
        raise UsageError("--checkpoint is required")
    if not cfg.checkpoint.is_file():
        raise UsageError(f"file not found: {cfg.checkpoint}")
    return load_checkpoint(cfg.checkpoint)


def cmd_parse(args: argparse.Namespace) -> int:
    cfg = RunConfig.from_args(args)
    schema = cfg.load_schema()
    try:
        model = _load_model(cfg)
    except Seq2ActError as exc:
        print(f"{cfg.checkpoint}: {exc.code}: {exc}", file=sys.stderr)
        return EXIT_DATA
    explain_path = Path(f"{args.out}.explain.jsonl") if args.explain and args.out else None
    explain_fh = explain_path.open("w", encoding="utf-8") if explain_path else sys.stderr
    failures = 0
    try:
        with _Output(args.out) as out:
            for path in cfg.corpus:
                for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
                    sentence = line.split("\t", 1)[0]
                    try:
                        result = parse(model, schema, sentence, cfg.beam, cfg.level, explain=args.explain)
                        if result.logical_form is None:
                            raise Seq2ActError(result.error or "ill-formed result")
                    except Seq2ActError as exc:
                        failures += 1
                        _report(lineno, exc, sys.stderr)
                        out.write(f"{exc.code}\t\n")
                        continue
                    out.write(f"{result.score:.6f}\t{result.logical_form}\n")
                    if args.explain:
                        explain_fh.write(json.dumps({"line": lineno}) + "\n")
                        explain_fh.write(diagnostics_jsonl(result))
    finally:
        if explain_path:
            explain_fh.close()
    return EXIT_DATA if failures else EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    cfg = RunConfig.from_args(args)
    if len(cfg.corpus) != 2:
        raise UsageError("eval takes PREDICTIONS GOLD")
    schema = cfg.load_schema()
    pred_path, gold_path = cfg.corpus
    # one line per input sentence; an empty last column marks a failed parse
    predictions = [line.rpartition("\t")[2].strip() or None
                   for line in pred_path.read_text(encoding="utf-8").splitlines()]
    gold = [payload for _, _, payload in _records(gold_path)]
    try:
        report = evaluate(predictions, gold, schema)
    except Seq2ActError as exc:
        print(f"{exc.code}: {exc}", file=sys.stderr)
        return EXIT_DATA
    sys.stdout.write(report.to_table())
    if args.out:
        Path(args.out).write_text(report.to_json() + "\n", encoding="utf-8")
    return EXIT_OK


# --- argument parsing --------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="seq2act", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, inputs_help, nargs="*"):
        p.add_argument("inputs", nargs=nargs, metavar="PATH", help=inputs_help)
        p.add_argument("--corpus", action="append", default=[], help="input corpus (repeatable)")
        p.add_argument("--schema", help="knowledge-base schema file")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", help="output path (default: stdout)")

    p = sub.add_parser("convert", help="logical forms <-> action sequences")
    common(p, "TSV or one-form-per-line files")
    p.add_argument("--to", choices=("actions", "lf"), required=True)
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("validate", help="check a schema and optional corpora against it")
    common(p, "corpora to check")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("train", help="train a model and write a checkpoint")
    common(p, "additional corpora")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--hidden", type=int, default=200)
    p.add_argument("--word-dim", type=int, default=100)
    p.add_argument("--struct-dim", type=int, default=50)
    p.add_argument("--sem-dim", type=int, default=50)
    p.add_argument("--metrics", help="per-epoch JSONL log (default: beside the checkpoint)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("parse", help="decode sentences, one per line")
    common(p, "input files")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--level", default="c1c2", choices=("none", "c1", "c1c2"))
    p.add_argument("--beam", type=int, default=5)
    p.add_argument("--explain", action="store_true", help="emit per-step beam diagnostics as JSONL")
    p.set_defaults(func=cmd_parse)

    p = sub.add_parser("eval", help="exact-match accuracy of predictions against gold")
    common(p, "PREDICTIONS GOLD")
    p.set_defaults(func=cmd_eval)
    return parser


def _configure_logging() -> None:
    level = os.environ.get("SEQ2ACT_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def main(argv: Sequence[str] | None = None) -> int:
    _configure_logging()
    args = build_parser().parse_args(argv)
    args.inputs = list(args.corpus) + list(args.inputs)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"seq2act {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
