import json
import subprocess
import sys

import pytest

from seq2act import synth
from seq2act.cli import main
from seq2act.errors import Seq2ActError
from seq2act.graph import validate_wellformed
from seq2act.logical_form import lf_to_graph, parse_lf, print_lf
from seq2act.schema import semantic_violations

SCHEMA = str(synth.TOY_SCHEMA)
TRAIN = str(synth.TOY_TRAIN)
TEST = str(synth.TOY_TEST)
SMALL_DIMS = ["--hidden", "24", "--word-dim", "16", "--struct-dim", "8", "--sem-dim", "8"]


def test_convert_round_trip_is_canonical(tmp_path, toy_schema):
    acts, back = tmp_path / "a.tsv", tmp_path / "b.tsv"
    assert main(["convert", "--schema", SCHEMA, "--to", "actions", TRAIN, "--out", str(acts)]) == 0
    first = acts.read_text().splitlines()[0].split("\t")
    assert first[-1].startswith("add_")
    assert main(["convert", "--schema", SCHEMA, "--to", "lf", str(acts), "--out", str(back)]) == 0
    expected = "".join(
        f"{u}\t{print_lf(parse_lf(lf, toy_schema), toy_schema)}\n"
        for u, lf in (line.split("\t") for line in synth.TOY_TRAIN.read_text().splitlines() if line)
    )
    assert back.read_bytes() == expected.encode("utf-8")


def test_convert_reports_bad_lines(tmp_path, capsys):
    lines = synth.TOY_TRAIN.read_text().splitlines()[:9]
    lines[6] = "broken line\tanswer(A,(state(A)"
    bad = tmp_path / "bad.tsv"
    bad.write_text("\n".join(lines) + "\n")
    assert main(["convert", "--schema", SCHEMA, "--to", "actions", str(bad),
                 "--out", str(tmp_path / "o.tsv")]) == 1
    assert "line 7: SyntaxError" in capsys.readouterr().err


def test_validate(capsys):
    assert main(["validate", "--schema", SCHEMA, TRAIN]) == 0
    assert "schema ok" in capsys.readouterr().out


def test_missing_schema_is_a_usage_error(tmp_path):
    missing = tmp_path / "nowhere.schema"
    proc = subprocess.run(
        [sys.executable, "-m", "seq2act", "train", "--schema", str(missing), "--corpus", TRAIN,
         "--checkpoint", str(tmp_path / "m.ckpt")],
        capture_output=True, text=True,
    )
    assert proc.returncode == 2
    assert str(missing) in proc.stderr


@pytest.fixture(scope="module")
def checkpoint(tmp_path_factory):
    path = tmp_path_factory.mktemp("ckpt") / "model.ckpt"
    code = main(["train", "--schema", SCHEMA, "--corpus", TRAIN, "--checkpoint", str(path),
                 "--epochs", "1", *SMALL_DIMS])
    assert code == 0
    return path


def test_single_epoch_training(checkpoint):
    lines = checkpoint.with_suffix(".metrics.jsonl").read_text().splitlines()
    assert len(lines) == 1
    record = json.loads(lines[0])
    assert record["epoch"] == 1 and record["lr"] == 0.1


def _parse(checkpoint, inputs, out, level):
    return main(["parse", "--schema", SCHEMA, "--checkpoint", str(checkpoint), "--level", level,
                 "--beam", "5", str(inputs), "--out", str(out)])


def test_parse_continues_past_bad_lines(checkpoint, tmp_path):
    inputs = tmp_path / "in.txt"
    inputs.write_text("which states border texas\n\nwhat is the capital of iowa\n")
    out = tmp_path / "pred.tsv"
    _parse(checkpoint, inputs, out, "c1c2")
    rows = out.read_text().splitlines()
    assert len(rows) == 3
    assert rows[1] == "EmptySentence\t"
    assert rows[0].split("\t")[1].startswith("answer(")


def _validity(path, schema, typed):
    good = 0
    rows = path.read_text().splitlines()
    for row in rows:
        lf = row.rpartition("\t")[2]
        try:
            g = lf_to_graph(parse_lf(lf, schema), schema)
        except Seq2ActError:
            continue
        if not validate_wellformed(g) and not (typed and semantic_violations(g, schema)):
            good += 1
    return good / len(rows)


def test_constrained_parsing_is_at_least_as_valid(checkpoint, tmp_path, toy_schema):
    inputs = tmp_path / "in.txt"
    inputs.write_text("".join(line.split("\t")[0] + "\n"
                              for line in synth.TOY_TEST.read_text().splitlines()[:25]))
    rates = {}
    for level in ("none", "c1c2"):
        out = tmp_path / f"{level}.tsv"
        _parse(checkpoint, inputs, out, level)
        rates[level] = _validity(out, toy_schema, typed=True)
    assert rates["c1c2"] == 1.0
    assert rates["c1c2"] >= rates["none"]


def test_explain_writes_diagnostics(checkpoint, tmp_path):
    inputs = tmp_path / "in.txt"
    inputs.write_text("which states border texas\n")
    out = tmp_path / "pred.tsv"
    assert main(["parse", "--schema", SCHEMA, "--checkpoint", str(checkpoint), str(inputs),
                 "--out", str(out), "--explain"]) == 0
    lines = (tmp_path / "pred.tsv.explain.jsonl").read_text().splitlines()
    records = [json.loads(x) for x in lines]
    assert records[0] == {"line": 1}
    assert {"step", "candidates", "filtered", "attention"} <= set(records[1])


def test_eval_gold_against_gold(tmp_path, capsys):
    report = tmp_path / "report.json"
    assert main(["eval", "--schema", SCHEMA, TEST, TEST, "--out", str(report)]) == 0
    assert json.loads(report.read_text())["accuracy"] == 1.0
    assert "accuracy (graph match)" in capsys.readouterr().out


def test_eval_length_mismatch(tmp_path):
    short = tmp_path / "short.tsv"
    short.write_text("\n".join(synth.TOY_TEST.read_text().splitlines()[:3]) + "\n")
    assert main(["eval", "--schema", SCHEMA, str(short), TEST]) == 1
