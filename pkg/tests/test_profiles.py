import math
from fractions import Fraction
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from lsqdfo.profiles import (
    UNSOLVED,
    EvalLog,
    EvalRecord,
    ProfileTable,
    average_profiles,
    data_profile,
    evals_to_solve,
    load_logs,
    performance_profile,
    profile_tables_from_logs,
    profiles_to_csv,
    read_log_jsonl,
    solved_threshold,
    write_log_jsonl,
)


def fake_problem(two_f0=2.0, two_fstar=0.0, n=2):
    return SimpleNamespace(two_f0=two_f0, two_fstar=two_fstar, n=n)


def make_log(fvals, problem="p", run=0, solver="s"):
    recs = [EvalRecord(i + 1, np.zeros(1), f, f) for i, f in enumerate(fvals)]
    return EvalLog(problem, run, solver, recs)


def test_solved_threshold():
    assert solved_threshold(10.0, 2.0, 0.5) == 1.0 + 0.5 * 4.0
    assert solved_threshold(24.2, 0.0, 1e-5) == 12.1e-5


def test_evals_to_solve_uses_first_hit():
    p = fake_problem(two_f0=2.0)  # f0 = 1
    assert evals_to_solve([1.0, 0.5, 0.09, 0.2, 0.01], p, 0.1) == 3
    assert evals_to_solve([1.0, 0.5, 0.1], p, 0.1) == 3  # threshold is inclusive
    assert evals_to_solve([1.0, 0.5], p, 0.1) == UNSOLVED
    assert evals_to_solve([], p, 0.1) == UNSOLVED
    assert evals_to_solve(make_log([1.0, 0.05]), p, 0.1) == 2
    with pytest.raises(ValueError):
        evals_to_solve([1.0], p, 1.0)


@settings(max_examples=100)
@given(fvals=st.lists(st.floats(0, 10), min_size=1, max_size=40),
       t1=st.floats(1e-9, 0.99), t2=st.floats(1e-9, 0.99))
def test_evals_to_solve_monotone_in_tau(fvals, t1, t2):
    p = fake_problem(two_f0=20.0)
    lo, hi = sorted((t1, t2))
    assert evals_to_solve(fvals, p, hi) <= evals_to_solve(fvals, p, lo)


def test_eval_log_requires_consecutive_indices():
    with pytest.raises(ValueError):
        EvalLog("p", 0, "s", [EvalRecord(2, np.zeros(1), 1.0, 1.0)])


# --- brute-force recount oracles ---------------------------------------------

def data_oracle(ns, dims, ng):
    alphas = [Fraction(k, 2) for k in range(2 * ng + 1)]
    out = []
    for a in alphas:
        hits = 0
        for p in ns:
            if ns[p] != math.inf and Fraction(int(ns[p])) <= a * (dims[p] + 1):
                hits += 1
        out.append(Fraction(hits, len(ns)))
    return [float(a) for a in alphas], [float(v) for v in out]


def perf_oracle(ns_by_solver):
    problems = sorted(next(iter(ns_by_solver.values())))
    best = {p: min(ns[p] for ns in ns_by_solver.values()) for p in problems}
    ratios = [Fraction(int(ns[p]), int(best[p])) for ns in ns_by_solver.values() for p in problems
              if ns[p] != math.inf]
    top = max(ratios, default=Fraction(1))
    k_max = 0
    while Fraction(10 + k_max, 10) < top:
        k_max += 1
    out = {}
    for name, ns in ns_by_solver.items():
        vals = []
        for k in range(k_max + 1):
            a = Fraction(10 + k, 10)
            hits = sum(1 for p in problems if ns[p] != math.inf and ns[p] <= a * int(best[p]))
            vals.append(hits / len(problems))
        out[name] = ([float(Fraction(10 + k, 10)) for k in range(k_max + 1)], vals)
    return out


def random_ns(rng, problems, unsolved_frac=0.2, hi=400):
    return {p: (math.inf if rng.uniform() < unsolved_frac else int(rng.integers(1, hi))) for p in problems}


@pytest.mark.parametrize("seed", range(10))
def test_data_profile_matches_recount(seed):
    rng = np.random.default_rng(seed)
    problems = [f"p{i}" for i in range(int(rng.integers(1, 25)))]
    dims = {p: int(rng.integers(1, 12)) for p in problems}
    ns = random_ns(rng, problems)
    ng = int(rng.integers(1, 60))
    table = data_profile(ns, dims, ng)
    alphas, props = data_oracle(ns, dims, ng)
    assert list(table.alphas) == alphas
    assert list(table.proportions) == props


@pytest.mark.parametrize("seed", range(10))
def test_performance_profile_matches_recount(seed):
    rng = np.random.default_rng(100 + seed)
    problems = [f"p{i}" for i in range(int(rng.integers(1, 25)))]
    ns_by_solver = {s: random_ns(rng, problems, hi=60) for s in ("a", "b", "c")}
    tables = performance_profile(ns_by_solver)
    oracle = perf_oracle(ns_by_solver)
    for s in ns_by_solver:
        assert list(tables[s].alphas) == oracle[s][0]
        assert list(tables[s].proportions) == oracle[s][1]


def test_performance_profile_by_hand():
    ns = {"a": {"x": 10, "y": 30, "z": math.inf}, "b": {"x": 20, "y": 15, "z": math.inf}}
    tables = performance_profile(ns)
    a, b = tables["a"], tables["b"]
    assert a.alphas[0] == 1.0 and a.alphas[-1] == 2.0 and len(a.alphas) == 11
    assert a.proportions[0] == 1 / 3 and a.proportions[-1] == 2 / 3
    assert b.proportions[0] == 1 / 3 and b.proportions[-1] == 2 / 3


def test_profiles_monotone_and_bounded():
    rng = np.random.default_rng(7)
    problems = [f"p{i}" for i in range(30)]
    dims = {p: int(rng.integers(1, 10)) for p in problems}
    t = data_profile(random_ns(rng, problems), dims, 50)
    props = np.array(t.proportions)
    assert np.all(np.diff(props) >= 0) and props[0] == 0.0 and props[-1] <= 1.0


def test_average_profiles():
    t1 = ProfileTable(0.1, "data", (0.0, 0.5), (0.0, 0.5))
    t2 = ProfileTable(0.1, "data", (0.0, 0.5), (0.5, 1.0))
    avg = average_profiles([t1, t2])
    assert avg.proportions == (0.25, 0.75) and avg.runs_averaged == 2
    with pytest.raises(ValueError):
        average_profiles([t1, ProfileTable(0.1, "data", (0.0,), (0.0,))])
    with pytest.raises(ValueError):
        average_profiles([])


def test_log_roundtrip(tmp_path):
    log = EvalLog("bard", 3, "practical", [EvalRecord(1, np.array([1.0, 2.0]), 0.5, 0.25),
                                           EvalRecord(2, np.array([0.1, 0.2]), 0.1, 0.3)])
    path = tmp_path / "a" / "log.jsonl"
    write_log_jsonl(log, path)
    back = read_log_jsonl(path)
    assert (back.problem, back.run, back.solver) == ("bard", 3, "practical")
    assert_array_equal(back.f_true, [0.25, 0.3])
    assert_array_equal(back.records[1].point, [0.1, 0.2])
    assert [p.name for p in tmp_path.rglob("*")] == ["a", "log.jsonl"]
    assert len(load_logs(tmp_path)) == 1


def test_profile_tables_from_logs_average_over_runs():
    problems = {"p": fake_problem(two_f0=2.0, n=1), "q": fake_problem(two_f0=2.0, n=1)}
    logs = [
        make_log([1.0, 0.05], "p", 0, "noisy"),   # N = 2
        make_log([1.0, 0.5], "q", 0, "noisy"),    # unsolved
        make_log([1.0, 1.0, 0.05], "p", 1, "noisy"),
        make_log([0.05], "q", 1, "noisy"),
        make_log([1.0, 0.05], "p", 0, "smooth"),
        make_log([1.0, 1.0, 1.0, 0.01], "q", 0, "smooth"),
    ]
    tables = profile_tables_from_logs(logs, problems, [0.1], ng=3)
    data = {t.solver: t for t in tables if t.kind == "data"}
    assert data["noisy"].runs_averaged == 2
    curve = dict(data["noisy"].curve)
    # run 0: N = (2, inf); run 1: N = (3, 1); width n + 1 = 2
    assert curve[0.5] == 0.25 and curve[1.0] == 0.5 and curve[1.5] == 0.75
    perf = {t.solver: t for t in tables if t.kind == "performance"}
    assert perf["noisy"].alphas == perf["smooth"].alphas
    assert_allclose(perf["smooth"].proportions[-1], 1.0)


def test_csv_is_sorted_and_stable():
    t1 = ProfileTable(1e-5, "data", (0.0, 0.5), (0.0, 1.0), 1, "b")
    t2 = ProfileTable(1e-1, "data", (0.0,), (0.5,), 2, "a")
    text = profiles_to_csv([t1, t2])
    lines = text.strip().split("\n")
    assert lines[0] == "kind,solver,tau,alpha,proportion,runs_averaged"
    assert lines[1] == "data,a,0.1,0.0,0.5,2"
    assert profiles_to_csv([t2, t1]) == text
