import csv
import io
from pathlib import Path

import pytest

from omlet import datagen
from omlet.cli import main
from omlet.rulebase import parse_model, read_model, serialize_examples, serialize_model
from omlet.trainer import TrainConfig, TrainState, initialize_level

RULES = datagen.builtin_path("chair.rules")
TRUTH = datagen.builtin_path("chair_truth.model")


@pytest.fixture
def chair_file(tmp_path):
    p = tmp_path / "chair.ex"
    assert main(["gen", "--builtin", "chair", "--category", "conventional_chair", "--n", "30",
                 "--seed", "7", "--out", str(p)]) == 0
    return p


def test_bad_path_exits_two(tmp_path, capsys):
    code = main(["train", "--rules", str(tmp_path / "nope.rules"), "--examples", "x"])
    assert code == 2
    assert "error" in capsys.readouterr().err


def test_parse_error_exits_two(tmp_path, capsys):
    bad = tmp_path / "bad.rules"
    bad.write_text("category a extends b\nend\n")
    assert main(["train", "--rules", str(bad), "--examples", str(bad)]) == 2
    assert "line 1" in capsys.readouterr().err


def test_zero_rate_single_epoch_equals_initialization(tmp_path, chair_file, chair_defs):
    out = tmp_path / "m.model"
    assert main(["train", "--rules", RULES, "--examples", str(chair_file), "--out", str(out),
                 "--epochs", "1", "--lr", "0"]) == 0
    model = read_model(out)
    from omlet.rulebase import read_examples

    state = TrainState.fresh(chair_defs)
    initialize_level(1, read_examples(chair_file, chair_defs), chair_defs, state)
    for r in ("area", "contiguous_surface", "height"):
        assert model[r].params == state.model[r].params
    trace = (tmp_path / "m.model.trace.level1.csv").read_text().splitlines()
    assert trace[0] == "epoch,total_error,allow_worsening" and len(trace) == 2


def test_train_then_eval(tmp_path, chair_file, capsys):
    out = tmp_path / "m.model"
    assert main(["train", "--rules", RULES, "--examples", str(chair_file), "--out", str(out),
                 "--epochs", "50"]) == 0
    best = float(read_model(out).provenance["level1.best_error"])
    report = tmp_path / "r.csv"
    capsys.readouterr()
    assert main(["eval", "--rules", RULES, "--model", str(out), "--examples", str(chair_file),
                 "--out", str(report)]) == 0
    summary = dict(line.split("=", 1) for line in capsys.readouterr().out.splitlines())
    assert float(summary["average_error"]) <= best + 1e-9
    rows = list(csv.DictReader(report.open()))
    assert len(rows) == 30


def test_eval_truth_self_consistent(chair_file, capsys):
    assert main(["eval", "--rules", RULES, "--model", TRUTH, "--examples", str(chair_file)]) == 0
    err = capsys.readouterr().err
    assert "average_error=0.0" in err.splitlines()


def test_worked_example_file(tmp_path, capsys):
    model = tmp_path / "unit.model"
    from omlet.model import Model
    from omlet.rulebase import read_rules

    defs = read_rules(RULES)
    m = Model.from_params({r: (0, 1, 2, 3) for r in defs.ranges_for("straightback_chair")})
    model.write_text(serialize_model(m))
    meas = "\n".join(f"  m {r}={0.86 if r == 'area' else 0.76 if r == 'back_height' else 1}"
                     for r in defs.ranges_for("straightback_chair"))
    ex = tmp_path / "one.ex"
    ex.write_text("example w category=straightback_chair desired=0.9625\n" + meas +
                  "\n  b provides_stable_support=1\n  b back_clearance=1\n")
    capsys.readouterr()
    assert main(["eval", "--rules", RULES, "--model", str(model), "--examples", str(ex)]) == 0
    (row,) = csv.DictReader(io.StringIO(capsys.readouterr().out))
    assert float(row["abs_error"]) == pytest.approx(0.0039, abs=1e-6)


def test_empty_eval_exits_two(tmp_path):
    empty = tmp_path / "empty.ex"
    empty.write_text("")
    assert main(["eval", "--rules", RULES, "--model", TRUTH, "--examples", str(empty)]) == 2


def test_partial_model_exits_one(tmp_path, chair_file):
    out = tmp_path / "m.model"
    main(["train", "--rules", RULES, "--examples", str(chair_file), "--out", str(out), "--epochs", "5"])
    sb = tmp_path / "sb.ex"
    assert main(["gen", "--builtin", "chair", "--category", "straightback_chair", "--n", "3",
                 "--out", str(sb)]) == 0
    assert main(["eval", "--rules", RULES, "--model", str(out), "--examples", str(sb)]) == 1


def test_loo_and_partition(tmp_path, chair_file, capsys):
    small = tmp_path / "small.ex"
    small.write_text("\n\n".join(chair_file.read_text().split("\n\n")[:2]) + "\n")
    assert main(["loo", "--rules", RULES, "--examples", str(small), "--epochs", "20"]) == 0
    out = capsys.readouterr()
    assert len(out.out.strip().splitlines()) == 3
    assert "mean_error=" in out.err
    curve = tmp_path / "curve.csv"
    assert main(["partition", "--rules", RULES, "--examples", str(chair_file), "--sizes", "5,10",
                 "--partitions", "2", "--epochs", "20", "--out", str(curve)]) == 0
    assert curve.read_text().splitlines()[0] == "train_size,mean_error,std_error"
    assert main(["partition", "--rules", RULES, "--examples", str(chair_file), "--sizes", "30"]) == 2


def test_gen_reproducible_and_quality(tmp_path):
    a, b = tmp_path / "a.ex", tmp_path / "b.ex"
    for p in (a, b):
        assert main(["gen", "--builtin", "cup", "--n", "200", "--p-normal", "0.8", "--seed", "7",
                     "--out", str(p)]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert a.read_text().count("example ") == 200
    bad = tmp_path / "bad.ex"
    assert main(["gen", "--builtin", "chair", "--category", "conventional_chair", "--n", "10",
                 "--quality", "bad", "--out", str(bad)]) == 0
    from omlet.rulebase import read_examples, read_rules

    exs = read_examples(bad, read_rules(RULES))
    assert all(e.desired < 0.6 for e in exs)


def test_gen_infeasible_histogram(tmp_path):
    hist = tmp_path / "h.csv"
    hist.write_text("0.0,3\n")
    code = main(["gen", "--builtin", "chair", "--category", "conventional_chair", "--p-normal", "1",
                 "--histogram", str(hist), "--max-draws", "200"])
    assert code == 1


def test_gen_from_files(tmp_path):
    out = tmp_path / "g.ex"
    assert main(["gen", "--rules", RULES, "--model", TRUTH, "--category", "armchair", "--n", "4",
                 "--out", str(out)]) == 0
    assert main(["gen", "--rules", RULES]) == 2
