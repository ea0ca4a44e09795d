"""Solved thresholds, data profiles and performance profiles.

Profiles are computed from evaluation logs. A problem counts as solved once
the running minimum of the noiseless objective drops to
``f* + tau * (f(x0) - f*)``, using the reference values stored on the
problem.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "EvalRecord",
    "EvalLog",
    "ProfileTable",
    "UNSOLVED",
    "solved_threshold",
    "evals_to_solve",
    "data_profile",
    "performance_profile",
    "average_profiles",
    "write_log_jsonl",
    "read_log_jsonl",
    "load_logs",
    "profiles_to_csv",
    "profile_tables_from_logs",
    "atomic_write",
]

UNSOLVED = math.inf


@dataclass(frozen=True)
class EvalRecord:
    eval_index: int
    point: np.ndarray
    f_noisy: float
    f_true: float

    def to_json(self) -> dict:
        return {
            "eval_index": self.eval_index,
            "point": [float(v) for v in self.point],
            "f_noisy": float(self.f_noisy),
            "f_true": float(self.f_true),
        }


@dataclass
class EvalLog:
    problem: str
    run: int = 0
    solver: str = "dfo"
    records: list = field(default_factory=list)

    def __post_init__(self):
        for i, rec in enumerate(self.records, start=1):
            if rec.eval_index != i:
                raise ValueError(f"eval_index must be consecutive from 1 (got {rec.eval_index} at {i})")

    @property
    def f_true(self) -> np.ndarray:
        return np.array([rec.f_true for rec in self.records])

    def __len__(self):
        return len(self.records)


@dataclass(frozen=True)
class ProfileTable:
    tau: float
    kind: str
    alphas: tuple
    proportions: tuple
    runs_averaged: int = 1
    solver: str = "dfo"

    @property
    def curve(self) -> list:
        return list(zip(self.alphas, self.proportions))


def solved_threshold(two_f0: float, two_fstar: float, tau: float) -> float:
    f0, fstar = 0.5 * two_f0, 0.5 * two_fstar
    return fstar + tau * (f0 - fstar)


def evals_to_solve(log, problem, tau: float):
    """First evaluation index whose running-best true objective is solved.

    ``log`` may be an :class:`EvalLog` or a plain sequence of ``f_true``
    values; returns :data:`UNSOLVED` (``inf``) when the threshold is never met.
    """
    if not 0 < tau < 1:
        raise ValueError("tau must lie in (0, 1)")
    fvals = log.f_true if isinstance(log, EvalLog) else np.asarray(log, dtype=float)
    threshold = solved_threshold(problem.two_f0, problem.two_fstar, tau)
    hits = np.flatnonzero(np.minimum.accumulate(fvals) <= threshold) if len(fvals) else []
    if len(hits) == 0:
        return UNSOLVED
    return int(hits[0]) + 1


def data_alphas(ng, step: float = 0.5) -> np.ndarray:
    return np.arange(0.0, ng + 0.5 * step, step)


def perf_alphas(alpha_max, step: float = 0.1) -> np.ndarray:
    count = int(math.ceil(round((max(alpha_max, 1.0) - 1.0) / step, 9)))
    return np.round(1.0 + step * np.arange(count + 1), 12)


def data_profile(ns: dict, dims: dict, ng, tau: float = float("nan"), solver: str = "dfo") -> ProfileTable:
    """Fraction of problems with ``N_p <= alpha * (n_p + 1)`` for alpha in [0, ng].

    Parameters
    ----------
    ns : dict
        Problem id -> evaluations needed (``inf`` if unsolved).
    dims : dict
        Problem id -> dimension ``n_p``.
    ng : float
        Budget in simplex gradients.
    """
    if not ns:
        raise ValueError("data profile needs at least one problem")
    if not ng > 0:
        raise ValueError("ng must be positive")
    alphas = data_alphas(ng)
    evals = np.array([ns[p] for p in ns], dtype=float)
    width = np.array([dims[p] + 1 for p in ns], dtype=float)
    props = [np.count_nonzero(evals <= a * width) / evals.size for a in alphas]
    return ProfileTable(tau, "data", tuple(float(a) for a in alphas),
                        tuple(float(p) for p in props), 1, solver)


def performance_profile(ns_by_solver: dict, tau: float = float("nan"), alpha_max=None,
                        nstar: dict | None = None) -> dict:
    """Performance profile per solver, normalized by the best solver per problem.

    ``nstar`` overrides the per-problem minimum, e.g. with the minimum over
    several noisy runs. Problems solved by nobody count as unsolved.
    """
    if not ns_by_solver:
        raise ValueError("performance profile needs at least one solver")
    problems = sorted(next(iter(ns_by_solver.values())))
    if not problems:
        raise ValueError("performance profile needs at least one problem")
    if nstar is None:
        nstar = {p: min(ns[p] for ns in ns_by_solver.values()) for p in problems}
    if alpha_max is None:
        ratios = [ns[p] / nstar[p] for ns in ns_by_solver.values() for p in problems
                  if math.isfinite(ns[p]) and math.isfinite(nstar[p])]
        alpha_max = max(ratios, default=1.0)
    alphas = perf_alphas(alpha_max)
    out = {}
    for name, ns in ns_by_solver.items():
        props = []
        for a in alphas:
            # relative slack absorbs rounding in a * nstar (grid values are not binary exact)
            count = sum(1 for p in problems
                        if math.isfinite(nstar[p]) and ns[p] <= a * nstar[p] * (1 + 1e-12))
            props.append(count / len(problems))
        out[name] = ProfileTable(tau, "performance", tuple(float(a) for a in alphas),
                                 tuple(float(v) for v in props), 1, name)
    return out


def average_profiles(tables) -> ProfileTable:
    tables = list(tables)
    if not tables:
        raise ValueError("nothing to average")
    first = tables[0]
    for tab in tables[1:]:
        if tab.kind != first.kind or tab.alphas != first.alphas:
            raise ValueError("profile tables have mismatched kind or alpha grid")
    props = np.mean([tab.proportions for tab in tables], axis=0)
    return ProfileTable(first.tau, first.kind, first.alphas,
                        tuple(float(v) for v in props), len(tables), first.solver)


def profile_tables_from_logs(logs, problems: dict, taus, ng: float = 200) -> list:
    """Data and performance profiles for every solver label found in ``logs``.

    Logs are grouped by solver label and run index. Data profiles are averaged
    over runs. Performance profiles are computed run by run (a solver with a
    single run reuses it against every run of the others) on a common alpha
    grid and then averaged.
    """
    grouped: dict = {}
    for log in logs:
        grouped.setdefault(log.solver, {}).setdefault(log.run, {})[log.problem] = log
    names = sorted(problems)
    dims = {p: problems[p].n for p in names}
    solvers = sorted(grouped)
    all_runs = sorted({r for runs in grouped.values() for r in runs})
    tables = []
    for tau in taus:
        ns = {
            s: {r: {p: (evals_to_solve(runs[r][p], problems[p], tau) if p in runs[r] else UNSOLVED)
                    for p in names}
                for r in runs}
            for s, runs in grouped.items()
        }
        for s in solvers:
            tables.append(average_profiles(
                data_profile(ns[s][r], dims, ng, tau, s) for r in sorted(ns[s])))

        def run_table(r):
            return {s: ns[s][r] if r in ns[s] else ns[s][min(ns[s])] for s in solvers}

        ratios = []
        for r in all_runs:
            table = run_table(r)
            for p in names:
                best = min(table[s][p] for s in solvers)
                ratios += [table[s][p] / best for s in solvers
                           if math.isfinite(table[s][p]) and math.isfinite(best) and best > 0]
        alpha_max = max(ratios, default=1.0)
        per_run = [performance_profile(run_table(r), tau, alpha_max) for r in all_runs]
        for s in solvers:
            tables.append(average_profiles(res[s] for res in per_run))
    return tables


# --- files ----------------------------------------------------------------

def atomic_write(path: Path, text: str):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.tmp{os.getpid()}")
    tmp.write_text(text)
    os.replace(tmp, path)


def write_log_jsonl(log: EvalLog, path):
    """One JSON object per evaluation, tagged with problem, solver and run."""
    lines = []
    for rec in log.records:
        row = rec.to_json()
        row.update(problem=log.problem, solver=log.solver, run=log.run)
        lines.append(json.dumps(row))
    atomic_write(path, "\n".join(lines) + ("\n" if lines else ""))


def read_log_jsonl(path) -> EvalLog:
    records, meta = [], {}
    with open(path) as fh:
        for line in fh:
            if not line.strip():
                continue
            row = json.loads(line)
            meta = row
            records.append(EvalRecord(row["eval_index"], np.array(row.get("point", [])),
                                      row["f_noisy"], row["f_true"]))
    stem = Path(path).stem
    return EvalLog(meta.get("problem", stem), int(meta.get("run", 0)),
                   meta.get("solver", "dfo"), records)


def load_logs(log_dir) -> list:
    paths = sorted(Path(log_dir).rglob("*.jsonl"))
    logs = [read_log_jsonl(p) for p in paths]
    return [log for log in logs if len(log)]


def profiles_to_csv(tables) -> str:
    rows = sorted(
        ((t.kind, t.solver, t.tau, a, p, t.runs_averaged)
         for t in tables for a, p in zip(t.alphas, t.proportions)),
        key=lambda row: (row[0], row[1], row[2], row[3]),
    )
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["kind", "solver", "tau", "alpha", "proportion", "runs_averaged"])
    for kind, solver, tau, alpha, prop, runs in rows:
        writer.writerow([kind, solver, repr(float(tau)), repr(float(alpha)), repr(float(prop)), runs])
    return buf.getvalue()
