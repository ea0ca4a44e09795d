"""Command-line front end: single solves, benchmark sweeps, profiles, manifests.

Relative output paths are resolved against ``$LSQDFO_OUT`` when it is set.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import re
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .interp import geometry_dump
from .problems import (
    NOISE_KINDS,
    PROBLEM_NAMES,
    ConfigurationError,
    NoiseSpec,
    build_suite,
    get_problem,
    suite_manifest,
)
from .profiles import atomic_write, load_logs, profile_tables_from_logs, profiles_to_csv, write_log_jsonl
from .solver import SolverConfig, solve

OUT_ENV = "LSQDFO_OUT"
TAU_GRID = (1e-1, 1e-5, 1e-7, 1e-9, 1e-11)
CLEAN_STATUSES = ("small_objective", "small_rho", "budget")


def out_root() -> Path:
    return Path(os.environ.get(OUT_ENV, "."))


def resolve_path(path) -> Path:
    path = Path(path)
    return path if path.is_absolute() else out_root() / path


def solver_label(mode: str, kind: str, sigma: float) -> str:
    if kind == "none":
        return mode
    return f"{mode}+{kind}({sigma:g})"


def _safe_name(label: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]+", "_", label).strip("_")


def _dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


@dataclass
class BenchPlan:
    problems: list = field(default_factory=lambda: list(PROBLEM_NAMES))
    modes: list = field(default_factory=lambda: ["practical"])
    noise_kinds: list = field(default_factory=lambda: ["none"])
    sigmas: list = field(default_factory=lambda: [1e-2])
    taus: list = field(default_factory=lambda: [1e-5])
    ng: int = 200
    runs: int = 10
    base_seed: int = 0
    out_dir: str = "bench"
    strict: bool = False

    def validate(self):
        if self.runs < 1:
            raise ConfigurationError("runs must be >= 1")
        if self.ng < 1:
            raise ConfigurationError("budget in simplex gradients must be >= 1")
        for name in self.problems:
            get_problem(name)
        for mode in self.modes:
            SolverConfig(mode=mode).validate()
        for kind in self.noise_kinds:
            for sigma in self.sigmas:
                NoiseSpec(kind, sigma)
        if not all(0 < t < 1 for t in self.taus):
            raise ConfigurationError("tau values must lie in (0, 1)")
        return self

    def cells(self) -> list:
        """One cell per (problem, mode, noise, sigma, run), in a fixed order."""
        out = []
        for name in self.problems:
            for mode in self.modes:
                for kind in self.noise_kinds:
                    for sigma in ([0.0] if kind == "none" else self.sigmas):
                        label = solver_label(mode, kind, sigma)
                        for run in range(self.runs):
                            out.append({
                                "problem": name,
                                "mode": mode,
                                "noise": kind,
                                "sigma": float(sigma),
                                "run": run,
                                "seed": self.base_seed + run,
                                "solver": label,
                                "log": f"logs/{_safe_name(label)}/{_safe_name(name)}/run{run:03d}.jsonl",
                                "ng": self.ng,
                                "strict": self.strict,
                            })
        return out


def run_cell(cell: dict, out_dir) -> dict:
    """Solve one bench cell and write its log; failures are reported, not raised."""
    summary = {k: cell[k] for k in ("problem", "solver", "mode", "noise", "sigma", "run", "seed", "log")}
    try:
        problem = get_problem(cell["problem"])
        config = SolverConfig(mode=cell["mode"], max_evals=cell["ng"] * (problem.n + 1), strict=cell["strict"])
        noise = NoiseSpec(cell["noise"], cell["sigma"], cell["seed"])
        result = solve(problem, config, noise, run=cell["run"])
    except Exception as exc:  # recorded per cell so the sweep continues
        summary.update(termination=None, error=f"{type(exc).__name__}: {exc}")
        return summary
    result.trace.solver = cell["solver"]
    write_log_jsonl(result.trace, Path(out_dir) / cell["log"])
    st = result.stats
    summary.update(
        termination=result.termination,
        evals_used=result.evals_used,
        iterations=result.iterations,
        f_final=float(result.f_final),
        trs_calls=st["trs_calls"],
        cauchy_checked=st["cauchy_checked"],
        cauchy_failures=st["cauchy_failures"],
        step_bound_failures=st["step_bound_failures"],
        error=None,
    )
    return summary


def _run_cell_star(args):
    return run_cell(*args)


def run_bench(plan: BenchPlan, workers: int = 1) -> dict:
    plan.validate()
    out_dir = resolve_path(plan.out_dir)
    cells = plan.cells()
    jobs = [(cell, out_dir) for cell in cells]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            summaries = list(pool.map(_run_cell_star, jobs, chunksize=4))
    else:
        summaries = [run_cell(*job) for job in jobs]
    manifest = {
        "plan": asdict(plan),
        "problems": suite_manifest([get_problem(p) for p in plan.problems]),
        "cells": summaries,
    }
    atomic_write(out_dir / "manifest.json", _dump_json(manifest))
    return manifest


def compute_profiles(log_dir, taus, ng: float = 200) -> list:
    logs = load_logs(log_dir)
    if not logs:
        raise ConfigurationError(f"no evaluation logs found under {log_dir}")
    problems = {log.problem: get_problem(log.problem) for log in logs}
    return profile_tables_from_logs(logs, problems, taus, ng)


# --- commands -------------------------------------------------------------

def cmd_solve(args) -> int:
    problem = get_problem(args.problem)
    n_evals = args.budget_gradients * (problem.n + 1)
    config = SolverConfig(mode=args.mode, rho_end=args.rho_end, max_evals=n_evals, strict=args.strict)
    noise = NoiseSpec(args.noise, args.sigma, args.seed)
    result = solve(problem, config, noise)
    result.trace.solver = solver_label(args.mode, args.noise, args.sigma)

    out = resolve_path(args.out)
    log_path = resolve_path(args.log) if args.log else out.with_suffix(".jsonl")
    payload = result.to_json()
    payload.update(solver=result.trace.solver, noise={"kind": args.noise, "sigma": args.sigma, "seed": args.seed},
                   config=asdict(config), log=str(log_path))
    atomic_write(out, _dump_json(payload))
    write_log_jsonl(result.trace, log_path)
    if args.dump_geometry and result.final_set is not None:
        dump = geometry_dump(result.final_set, result.stats.get("final_delta"), problem.lower, problem.upper)
        atomic_write(resolve_path(args.dump_geometry), _dump_json(dump))
    print(f"{problem.name}: {result.termination} after {result.evals_used} evaluations, "
          f"f = {result.f_final:.10g}")
    return 0 if result.termination in CLEAN_STATUSES else 1


def cmd_bench(args) -> int:
    plan = BenchPlan(
        problems=args.problems or list(PROBLEM_NAMES),
        modes=args.modes,
        noise_kinds=args.noise,
        sigmas=args.sigma,
        taus=args.tau,
        ng=args.budget_gradients,
        runs=args.runs,
        base_seed=args.seed,
        out_dir=args.out,
        strict=args.strict,
    )
    manifest = run_bench(plan, workers=args.workers)
    failed = [c for c in manifest["cells"] if c["error"]]
    for cell in failed:
        print(f"cell {cell['problem']}/{cell['solver']}/run{cell['run']} failed: {cell['error']}", file=sys.stderr)
    print(f"{len(manifest['cells'])} cells written to {resolve_path(plan.out_dir)}")
    return 1 if failed else 0


def cmd_profile(args) -> int:
    taus = sorted(set(args.tau) | (set(TAU_GRID) if args.tau_grid else set()), reverse=True)
    tables = compute_profiles(resolve_path(args.log_dir), taus, args.budget_gradients)
    text = profiles_to_csv(tables)
    if args.out == "-":
        sys.stdout.write(text)
    else:
        atomic_write(resolve_path(args.out), text)
    return 0


def cmd_manifest(args) -> int:
    text = _dump_json(suite_manifest(build_suite(args.problems or None)))
    if args.out == "-":
        sys.stdout.write(text)
    else:
        atomic_write(resolve_path(args.out), text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lsqdfo", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve one problem")
    p.add_argument("--problem", required=True, help="problem id, e.g. rosenbrock or integreq:200")
    p.add_argument("--mode", choices=("practical", "faithful"), default="practical")
    p.add_argument("--noise", choices=NOISE_KINDS, default="none")
    p.add_argument("--sigma", type=float, default=1e-2)
    p.add_argument("--budget-gradients", type=int, default=200)
    p.add_argument("--rho-end", type=float, default=1e-10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="result.json")
    p.add_argument("--log", default=None, help="evaluation log path (default: OUT with .jsonl suffix)")
    p.add_argument("--dump-geometry", default=None, metavar="PATH")
    p.add_argument("--strict", action="store_true", help="assert the decrease certificates on every step")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("bench", help="run a benchmark sweep")
    p.add_argument("--problems", nargs="*", default=None)
    p.add_argument("--modes", nargs="+", choices=("practical", "faithful"), default=["practical"])
    p.add_argument("--noise", nargs="+", choices=NOISE_KINDS, default=["none"])
    p.add_argument("--sigma", nargs="+", type=float, default=[1e-2])
    p.add_argument("--tau", nargs="+", type=float, default=[1e-5])
    p.add_argument("--budget-gradients", type=int, default=200)
    p.add_argument("--runs", type=int, default=10)
    p.add_argument("--seed", type=int, default=0, help="base seed; run k uses seed + k")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", default="bench")
    p.add_argument("--strict", action="store_true")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("profile", help="data and performance profiles from logs")
    p.add_argument("log_dir")
    p.add_argument("--tau", nargs="+", type=float, default=[1e-5])
    p.add_argument("--tau-grid", action="store_true", help="add the tolerances 1e-1, 1e-5, 1e-7, 1e-9, 1e-11")
    p.add_argument("--budget-gradients", type=float, default=200)
    p.add_argument("--out", default="profiles.csv", help="CSV path, or - for stdout")
    p.set_defaults(func=cmd_profile)

    p = sub.add_parser("manifest", help="problem registry as JSON")
    p.add_argument("--problems", nargs="*", default=None)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_manifest)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
