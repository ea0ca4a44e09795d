import csv
import io
import json

import numpy as np
import pytest

from lsqdfo import cli
from lsqdfo.problems import PROBLEM_NAMES, Problem, get_problem


@pytest.fixture
def out(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUT_ENV, str(tmp_path))
    return tmp_path


def read_jsonl(path):
    return [json.loads(line) for line in path.read_text().splitlines()]


def test_solve_rosenbrock(out):
    assert cli.main(["solve", "--problem", "rosenbrock", "--mode", "practical"]) == 0
    result = json.loads((out / "result.json").read_text())
    assert result["termination"] == "small_objective"
    rows = read_jsonl(out / "result.jsonl")
    assert len(rows) == result["evals_used"]
    assert {"eval_index", "point", "f_noisy", "f_true"} <= set(rows[0])
    assert [r["eval_index"] for r in rows] == list(range(1, len(rows) + 1))


def test_solve_unknown_problem(out, capsys):
    assert cli.main(["solve", "--problem", "no_such_problem"]) == 2
    assert "no_such_problem" in capsys.readouterr().err


def test_bad_flag_is_usage_error(out):
    with pytest.raises(SystemExit) as exc:
        cli.main(["solve", "--problem", "rosenbrock", "--mode", "turbo"])
    assert exc.value.code == 2


def test_budget_binds(out):
    assert cli.main(["solve", "--problem", "rosenbrock", "--budget-gradients", "1", "--out", "b.json"]) == 0
    result = json.loads((out / "b.json").read_text())
    assert result["termination"] == "budget"
    assert result["evals_used"] <= 2 * 3


def test_noisy_solve_and_geometry_dump(out):
    args = ["solve", "--problem", "bard", "--noise", "add_chi2", "--sigma", "0.01", "--seed", "4",
            "--out", "n.json", "--dump-geometry", "geo.json"]
    assert cli.main(args) == 0
    result = json.loads((out / "n.json").read_text())
    assert result["solver"] == "practical+add_chi2(0.01)"
    assert result["noise"] == {"kind": "add_chi2", "sigma": 0.01, "seed": 4}
    geo = json.loads((out / "geo.json").read_text())
    assert geo["n"] == 3 and len(geo["points"]) == 4 and geo["poisedness"] >= 1.0


def test_eval_failure_exit_code(out, monkeypatch):
    base = get_problem("rosenbrock")

    def broken(x):
        return np.array([np.inf, 0.0])

    bad = Problem("broken", 2, 2, broken, base.x0, base.lower, base.upper, 1.0, 0.0)
    monkeypatch.setattr(cli, "get_problem", lambda name: bad)
    assert cli.main(["solve", "--problem", "broken"]) != 0
    assert json.loads((out / "result.json").read_text())["termination"] == "eval_failure"


def test_bench_smooth_cardinality(out):
    assert cli.main(["bench", "--runs", "1", "--budget-gradients", "5", "--out", "b"]) == 0
    logs = sorted((out / "b" / "logs").rglob("*.jsonl"))
    assert len(logs) == len(PROBLEM_NAMES) == 15
    manifest = json.loads((out / "b" / "manifest.json").read_text())
    assert len(manifest["cells"]) == 15 and len(manifest["problems"]) == 15
    assert all(c["error"] is None for c in manifest["cells"])
    assert "wall_time" not in json.dumps(manifest)


def test_bench_seeding_and_determinism(out):
    args = ["bench", "--problems", "bard", "freudenstein_roth", "--noise", "add_gaussian",
            "--runs", "10", "--seed", "100", "--budget-gradients", "10"]
    assert cli.main(args + ["--out", "r1"]) == 0
    assert cli.main(args + ["--out", "r2", "--workers", "2"]) == 0
    manifest = json.loads((out / "r1" / "manifest.json").read_text())
    for prob in ("bard", "freudenstein_roth"):
        cells = [c for c in manifest["cells"] if c["problem"] == prob]
        assert [c["seed"] for c in cells] == list(range(100, 110))
        assert len(list((out / "r1" / "logs").rglob(f"{prob}/*.jsonl"))) == 10
    files1 = sorted(p.relative_to(out / "r1") for p in (out / "r1" / "logs").rglob("*.jsonl"))
    files2 = sorted(p.relative_to(out / "r2") for p in (out / "r2" / "logs").rglob("*.jsonl"))
    assert files1 == files2
    for rel in files1:
        assert (out / "r1" / rel).read_bytes() == (out / "r2" / rel).read_bytes()
    # distinct seeds give distinct noisy traces
    a = (out / "r1" / files1[0]).read_bytes()
    b = (out / "r1" / files1[1]).read_bytes()
    assert a != b
    # a rerun into the same directory reproduces the manifest byte for byte
    before = (out / "r1" / "manifest.json").read_bytes()
    assert cli.main(args + ["--out", "r1"]) == 0
    assert (out / "r1" / "manifest.json").read_bytes() == before


def test_bench_rejects_bad_plan(out, capsys):
    assert cli.main(["bench", "--problems", "nope", "--out", "x"]) == 2
    assert "nope" in capsys.readouterr().err
    assert cli.main(["bench", "--runs", "0", "--out", "x"]) == 2


def test_profile_command(out):
    assert cli.main(["solve", "--problem", "rosenbrock", "--out", "logs/r.json"]) == 0
    assert cli.main(["profile", "logs", "--tau", "0.5", "1e-5", "--tau-grid", "--out", "prof.csv"]) == 0
    rows = list(csv.DictReader(io.StringIO((out / "prof.csv").read_text())))
    taus = sorted({float(r["tau"]) for r in rows})
    assert taus == sorted({0.5, 1e-1, 1e-5, 1e-7, 1e-9, 1e-11})
    assert {r["solver"] for r in rows} == {"practical"}
    assert {r["kind"] for r in rows} == {"data", "performance"}
    data = {(float(r["tau"]), float(r["alpha"])): float(r["proportion"])
            for r in rows if r["kind"] == "data"}
    # one problem solved: the curve jumps from 0 to 1 once the budget covers N_p
    assert data[(1e-5, 0.0)] == 0.0 and data[(1e-5, 200.0)] == 1.0
    for alpha in np.arange(0, 200.5, 0.5):
        assert data[(0.5, alpha)] >= data[(1e-5, alpha)]


def test_profile_empty_dir(out, capsys):
    (out / "empty").mkdir()
    assert cli.main(["profile", "empty"]) == 2
    assert "no evaluation logs" in capsys.readouterr().err


def test_manifest_command(capsys):
    assert cli.main(["manifest"]) == 0
    entries = json.loads(capsys.readouterr().out)
    assert [e["name"] for e in entries] == list(PROBLEM_NAMES)
    assert entries[0]["two_f0"] == 24.2
