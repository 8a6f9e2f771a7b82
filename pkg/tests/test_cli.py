import csv
import json
import subprocess
import sys

import pytest

from kpzlab import rng
from kpzlab.cli import main, read_manifest


def test_run_exact_test_passes(capsys):
    assert main(["run", "--test", "DW-EXACT", "--n", "2", "--r", "1", "--p", "0.5", "--t", "1"]) == 0
    assert capsys.readouterr().out.startswith("PASS DW-EXACT")


def test_failing_threshold_exits_one(capsys):
    assert main(["run", "--test", "DW-WEIGHTS", "--threshold", "-1"]) == 1
    assert "FAIL DW-WEIGHTS" in capsys.readouterr().out


@pytest.mark.parametrize(
    "argv",
    [
        ["run", "--test", "NOPE"],
        ["run"],
        ["run", "--test", "DW-EXACT", "--set", "n"],
        ["run", "--test", "DW-EXACT", "--n", "two"],
        ["run", "--test", "DW-EXACT", "--config", "/nonexistent/cfg"],
        ["run", "--sample", "nope"],
        ["run", "--sample", "tw", "--replicas", "0"],
        ["frobnicate"],
    ],
)
def test_usage_errors_exit_two(argv, capsys):
    assert main(argv) == 2


def test_runtime_error_exits_three(capsys):
    assert main(["run", "--sample", "oy-kernel", "--y", "-5", "--replicas", "1"]) == 3
    assert "runtime error" in capsys.readouterr().err


def test_config_file_and_overrides(tmp_path, capsys):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("# exact case\nn = 2\nr=1\np=0.5\nt=1\nseed=4\n")
    out = tmp_path / "r.json"
    assert main(["run", "--test", "DW-EXACT", "--config", str(cfg), "--output", str(out), "--omit-runtime"]) == 0
    (rep,) = json.loads(out.read_text())
    assert list(rep) == ["test_id", "statistic", "threshold", "pass", "replica_count"]
    assert rep["pass"] is True and rep["replica_count"] == 1


def test_sample_csv_is_byte_stable(tmp_path):
    paths = [tmp_path / f"s{i}.csv" for i in range(2)]
    for p in paths:
        assert main(["run", "--sample", "ep-gue", "--n", "2", "--replicas", "5", "--seed", "9", "--output", str(p)]) == 0
    raw = paths[0].read_bytes()
    assert raw == paths[1].read_bytes()
    assert b"\r" not in raw
    rows = list(csv.DictReader(raw.decode().splitlines()))
    assert [int(r["replica"]) for r in rows] == list(range(5))
    assert [int(r["seed"]) for r in rows] == [rng.derive_seed(9, i) for i in range(5)]


@pytest.mark.parametrize("model", ["oy-kernel", "kpz-kernel", "blp", "ep-gue", "tw"])
def test_every_sampler_runs(model, tmp_path):
    out = tmp_path / "s.csv"
    extra = ["--N", "100"] if model == "tw" else []
    extra += ["--n", "0.5"] if model == "kpz-kernel" else []
    assert main(["run", "--sample", model, "--replicas", "2", "--output", str(out), *extra]) == 0
    assert len(out.read_text().splitlines()) == 3


def _manifest(tmp_path):
    (tmp_path / "burke.cfg").write_text("replicas=300\n")
    m = tmp_path / "suite.txt"
    m.write_text(
        "# two quick entries\n"
        "test=DW-EXACT n=2 r=1 p=0.5 t=1\n"
        "\n"
        "test=BURKE-OY config=burke.cfg seed=2 nu=0\n"
    )
    return m


def test_manifest_parsing(tmp_path):
    entries = read_manifest(_manifest(tmp_path))
    assert [e["test"] for e in entries] == ["DW-EXACT", "BURKE-OY"]
    assert entries[1] == {"test": "BURKE-OY", "seed": 2, "config": {"replicas": 300, "nu": 0}}


def test_suite_output_independent_of_workers(tmp_path, capsys):
    m = _manifest(tmp_path)
    outs = []
    for w in ("1", "3"):
        out = tmp_path / f"r{w}.json"
        code = main(["suite", str(m), "--workers", w, "--output", str(out), "--omit-runtime"])
        assert code in (0, 1)
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]
    assert "test_id" in capsys.readouterr().out


def test_suite_unknown_test_and_empty_manifest(tmp_path):
    bad = tmp_path / "bad.txt"
    bad.write_text("test=NOPE\n")
    assert main(["suite", str(bad)]) == 2
    empty = tmp_path / "empty.txt"
    empty.write_text("# nothing\n")
    assert main(["suite", str(empty)]) == 0


def test_module_entry_point():
    res = subprocess.run(
        [sys.executable, "-m", "kpzlab", "run", "--test", "DW-WEIGHTS"], capture_output=True, text=True
    )
    assert res.returncode == 0 and res.stdout.startswith("PASS DW-WEIGHTS")


def test_exact_example_with_json(tmp_path, capsys):
    out = tmp_path / "r.json"
    argv = ["run", "--test", "DW-EXACT", "--n", "2", "--r", "1", "--p", "0.5", "--t", "1", "--seed", "7", "--output", str(out)]
    assert main(argv) == 0
    (rep,) = json.loads(out.read_text())
    assert rep["test_id"] == "DW-EXACT" and rep["statistic"] <= 1e-10 and rep["pass"] is True


def test_oy_sample_example_byte_identical(tmp_path):
    outs = []
    for i in range(2):
        p = tmp_path / f"oy{i}.csv"
        argv = ["run", "--sample", "oy-kernel", "--theta", "1", "--n", "2", "--replicas", "1000", "--seed", "1", "--output", str(p)]
        assert main(argv) == 0
        outs.append(p.read_bytes())
    assert outs[0] == outs[1]
    assert outs[0].startswith(b"replica,seed,value\n")
    assert outs[0].count(b"\n") == 1001
