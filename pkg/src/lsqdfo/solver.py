"""Derivative-free Gauss-Newton trust-region driver.

Two modes share the same building blocks:

``faithful``
    The theoretical algorithm: criticality phase, safety phase, model
    improvement by Lambda-poisedness repair, steps accepted only when the
    reduction ratio reaches ``eta1``.
``practical``
    The implementation variant: no criticality phase, distance-based geometry
    checks, the trial point always joins the interpolation set, the iterate is
    always the best point seen, and rho follows a schedule after repeated
    unsuccessful iterations.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .interp import DegenerateGeometry, InterpolationSet, lagrange_maxima, replacement_score, shift_base
from .models import build_objective_model
from .problems import (
    BudgetExhausted,
    ConfigurationError,
    EvalBudget,
    EvaluationFailure,
    NoiseSpec,
    Problem,
    evaluate,
    objective,
)
from .profiles import EvalLog, EvalRecord
from .subproblems import geometry_point, solve_trs, step_length_factor

__all__ = [
    "SolverConfig",
    "TrustState",
    "SolveResult",
    "solve",
    "update_radius",
    "reduce_rho",
    "safety_radius",
    "TERMINATION_STATUSES",
]

_log = logging.getLogger(__name__)

TERMINATION_STATUSES = ("small_objective", "small_rho", "budget", "eval_failure")


@dataclass
class SolverConfig:
    mode: str = "practical"
    delta0: float | None = None
    rho_end: float = 1e-10
    delta_max: float = 1e10
    gamma_dec: float = 0.5
    gamma_inc: float = 2.0
    gamma_inc_big: float = 4.0
    eta1: float = 0.1
    eta2: float = 0.7
    alpha1: float = 0.1
    alpha2: float = 0.5
    omega_s: float = 0.1
    gamma_s: float = 0.5
    # faithful mode
    eps_c: float = 1e-2
    mu: float = 1.0
    omega_c: float = 0.5
    poised_lambda: float = 10.0
    criticality_max_passes: int = 50
    # practical mode
    geometry_factor: float = 2.0
    unsuccessful_before_rho: int = 3
    max_evals: int | None = None
    strict: bool = False

    def validate(self):
        if self.mode not in ("faithful", "practical"):
            raise ConfigurationError(f"unknown mode {self.mode!r}")
        checks = [
            (0 < self.gamma_dec < 1 < self.gamma_inc <= self.gamma_inc_big, "0 < gamma_dec < 1 < gamma_inc <= gamma_inc_big"),
            (0 < self.alpha1 < self.alpha2 < 1, "0 < alpha1 < alpha2 < 1"),
            (0 < self.eta1 <= self.eta2 < 1, "0 < eta1 <= eta2 < 1"),
            (0 < self.omega_s < 1, "0 < omega_s < 1"),
            # widest range allowed by the sufficient-decrease constant c1 <= 1
            (0 < self.gamma_s < step_length_factor(1.0), "0 < gamma_s < 2/(1+sqrt(3))"),
            (self.rho_end > 0, "rho_end > 0"),
            (self.delta0 is None or self.delta0 > 0, "delta0 > 0"),
            (self.eps_c > 0 and self.mu > 0, "eps_c > 0 and mu > 0"),
            (0 < self.omega_c < 1, "0 < omega_c < 1"),
            (self.poised_lambda >= 1, "poised_lambda >= 1"),
            (self.geometry_factor >= 1, "geometry_factor >= 1"),
            (self.max_evals is None or self.max_evals >= 1, "max_evals >= 1"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigurationError(f"invalid solver config: need {msg}")
        return self


@dataclass
class TrustState:
    xk: np.ndarray
    delta: float
    rho: float
    f_best: float
    unsuccessful_streak: int = 0
    k: int = 0


@dataclass
class SolveResult:
    x_final: np.ndarray
    f_final: float
    evals_used: int
    iterations: int
    termination: str
    trace: EvalLog
    stats: dict = field(default_factory=dict)
    final_set: InterpolationSet | None = field(default=None, repr=False, compare=False)

    def to_json(self) -> dict:
        return {
            "problem": self.trace.problem,
            "x_final": [float(v) for v in self.x_final],
            "f_final": float(self.f_final),
            "evals_used": self.evals_used,
            "iterations": self.iterations,
            "termination": self.termination,
            "stats": self.stats,
        }


def update_radius(ratio, delta, snorm, rho, config: SolverConfig) -> float:
    """Trust-region radius after a step with reduction ratio ``ratio``."""
    if ratio >= config.eta2:
        return min(max(config.gamma_inc * delta, config.gamma_inc_big * snorm), config.delta_max)
    if ratio >= config.eta1:
        return max(config.gamma_dec * delta, snorm, rho)
    return max(min(config.gamma_dec * delta, snorm), rho)


def reduce_rho(rho, rho_end, alpha1: float = 0.1) -> float:
    if rho > 250.0 * rho_end:
        return alpha1 * rho
    if rho > 16.0 * rho_end:
        return math.sqrt(rho * rho_end)
    return rho_end


def safety_radius(rho, delta, config: SolverConfig) -> float:
    return max(rho, config.omega_s * delta)


class _Stop(Exception):
    def __init__(self, status):
        super().__init__(status)
        self.status = status


class _Run:
    """Mutable state of a single solve."""

    def __init__(self, problem: Problem, config: SolverConfig, noise: NoiseSpec, callback=None, run=0):
        self.problem = problem
        self.config = config
        self.noise = noise
        self.callback = callback
        n = problem.n
        max_evals = config.max_evals if config.max_evals is not None else 200 * (n + 1)
        self.budget = EvalBudget(max_evals)
        self.lower = problem.lower
        self.upper = problem.upper
        self.log = EvalLog(problem.name, run, config.mode)
        self.f_threshold = None
        self.iset = None
        self.state = None
        self.stats = {
            "trs_calls": 0,
            "cauchy_checked": 0,
            "cauchy_failures": 0,
            "step_bound_checked": 0,
            "step_bound_failures": 0,
            "safety_phases": 0,
            "geometry_steps": 0,
            "criticality_phases": 0,
            "criticality_capped": 0,
            "degenerate_repairs": 0,
            "rho_reductions": [],
            "peak_model_bytes": 0,
        }

    # -- evaluation --------------------------------------------------------

    def evaluate(self, x):
        x = np.clip(np.asarray(x, dtype=float), self.lower, self.upper)
        r = evaluate(self.problem, x, self.noise, self.budget)
        f = objective(r)
        f_true = f if self.noise.deterministic else objective(self.problem.residual(x))
        self.log.records.append(EvalRecord(len(self.log.records) + 1, x.copy(), f, f_true))
        if self.f_threshold is None:
            self.f_threshold = max(1e-12, 1e-20 * f)
        if f <= self.f_threshold:
            raise _Stop("small_objective")
        return x, r, f

    # -- interpolation set -------------------------------------------------

    def _simplex_steps(self, x, delta):
        steps = np.full(x.size, delta)
        up_room = self.upper - x
        down_room = x - self.lower
        flip = up_room < delta
        steps[flip] = -delta
        tight = flip & (down_room < delta)
        steps[tight] = np.where(up_room[tight] >= down_room[tight], up_room[tight], -down_room[tight])
        return steps

    def initial_set(self, delta):
        x0 = np.clip(self.problem.x0, self.lower, self.upper)
        n = self.problem.n
        x0, r0, _ = self.evaluate(x0)
        rvals = np.empty((n + 1, r0.size))
        rvals[0] = r0
        offsets = np.zeros((n + 1, n))
        steps = self._simplex_steps(x0, delta)
        self.iset = InterpolationSet(x0, offsets, rvals, np.full(n + 1, np.inf))
        self.iset.fvals[0] = objective(r0)
        for i in range(n):
            y = x0.copy()
            y[i] += steps[i]
            y, r, f = self.evaluate(y)
            self.iset.replace(i + 1, y, r, f)
        return self.iset

    def rebuild_around_iterate(self, delta):
        """Replace every point except the iterate with a coordinate simplex."""
        self.stats["degenerate_repairs"] += 1
        xk = self.iset.xk
        steps = self._simplex_steps(xk, delta)
        for i in range(self.problem.n):
            y = xk.copy()
            y[i] += steps[i]
            y, r, f = self.evaluate(y)
            self.iset.replace(i + 1, y, r, f)

    def build_model(self, delta):
        for _ in range(3):
            try:
                rmodel, omodel = build_objective_model(self.iset)
            except DegenerateGeometry:
                _log.debug("degenerate interpolation set; rebuilding around x_k")
                self.rebuild_around_iterate(max(delta, self.config.rho_end))
                if self.config.mode == "practical":
                    self.adopt_best()
                continue
            size = self.iset.nbytes + rmodel.nbytes + omodel.nbytes
            self.stats["peak_model_bytes"] = max(self.stats["peak_model_bytes"], size)
            return rmodel, omodel
        raise DegenerateGeometry("could not repair interpolation geometry")

    def adopt_best(self):
        """Practical mode: the iterate is always the best point evaluated."""
        t = self.iset.best_index()
        if self.iset.fvals[t] < self.iset.fvals[0]:
            self.iset.make_iterate(t)

    def insert_point(self, t, y, r, f):
        self.iset.replace(t, y, r, f)
        if self.config.mode == "practical":
            self.adopt_best()

    def geometry_step(self, t, delta):
        """Move point ``t`` to the maximizer of ``|L_t|`` on the trust region."""
        iset = self.iset
        try:
            y = geometry_point(iset, t, iset.xk, delta, self.lower, self.upper)
        except DegenerateGeometry:
            self.rebuild_around_iterate(delta)
            return
        self.stats["geometry_steps"] += 1
        y, r, f = self.evaluate(y)
        self.insert_point(t, y, r, f)

    def far_points(self, delta):
        dist = self.iset.distances()
        return dist, dist > self.config.geometry_factor * delta

    def poised(self, radius):
        """Lambda-poisedness test in ``B(x_k, radius)``; returns (ok, maxima, argmax)."""
        iset = self.iset
        dist = iset.distances()
        if np.any(dist[1:] > radius * (1 + 1e-12)):
            return False, None, None
        try:
            values, argmax = lagrange_maxima(iset, iset.xk, radius, self.lower, self.upper)
        except DegenerateGeometry:
            return False, None, None
        return bool(values.max() <= self.config.poised_lambda), values, argmax

    def make_poised(self, radius):
        """Replace points until the set is Lambda-poised in ``B(x_k, radius)``."""
        iset = self.iset
        for _ in range(5 * (self.problem.n + 1)):
            ok, values, argmax = self.poised(radius)
            if ok:
                return True
            dist = iset.distances()
            outside = dist[1:] > radius * (1 + 1e-12)
            if outside.any() or values is None:
                if values is None and not outside.any():
                    self.rebuild_around_iterate(radius)
                    continue
                t = 1 + int(np.argmax(dist[1:]))
                self.geometry_step(t, radius)
                continue
            t = 1 + int(np.argmax(values[1:]))
            self.stats["geometry_steps"] += 1
            y, r, f = self.evaluate(argmax[t])
            iset.replace(t, y, r, f)
        return False

    # -- phases --------------------------------------------------------------

    def trust_region_step(self, omodel, delta):
        step = solve_trs(omodel, delta, self.iset.xk, self.lower, self.upper)
        st = self.stats
        st["trs_calls"] += 1
        if not step.bounds_active:
            st["cauchy_checked"] += 1
            st["step_bound_checked"] += 1
            if not step.cauchy_ok:
                st["cauchy_failures"] += 1
            if not step.step_bound_ok:
                st["step_bound_failures"] += 1
            if self.config.strict:
                assert step.cauchy_ok, "sufficient decrease condition violated"
                assert step.step_bound_ok, "step length lower bound violated"
        return step

    def lower_rho(self, state, cause):
        """Shrink rho (and delta); stop when rho is already at its floor."""
        cfg = self.config
        if state.rho <= cfg.rho_end:
            raise _Stop("small_rho")
        old = state.rho
        if cfg.mode == "practical":
            state.rho = reduce_rho(old, cfg.rho_end, cfg.alpha1)
            state.delta = max(cfg.alpha2 * old, state.rho)
        else:
            state.rho, state.delta = cfg.alpha1 * old, cfg.alpha2 * old
        self.stats["rho_reductions"].append({"k": state.k, "cause": cause, "rho": state.rho,
                                             "streak": state.unsuccessful_streak})

    def notify(self, state):
        if self.callback is not None:
            self.callback(state)

    # -- drivers -------------------------------------------------------------

    def run_practical(self, state):
        cfg = self.config
        while True:
            state.k += 1
            iset = self.iset
            if float(iset.offsets[0] @ iset.offsets[0]) >= 1e3 * state.delta**2:
                shift_base(iset, iset.xk)
            _, omodel = self.build_model(state.delta)
            xk, fk = iset.xk, iset.fvals[0]
            step = self.trust_region_step(omodel, state.delta)
            snorm = float(np.linalg.norm(step.s))

            if snorm < cfg.gamma_s * state.rho:
                self.stats["safety_phases"] += 1
                new_delta = safety_radius(state.rho, state.delta, cfg)
                if new_delta == state.rho:
                    self.lower_rho(state, "safety")
                else:
                    state.delta = new_delta
                dist, far = self.far_points(state.delta)
                if far.any():
                    self.geometry_step(int(np.argmax(dist)), state.delta)
                state.xk, state.f_best = self.iset.xk, self.iset.fvals[0]
                self.notify(state)
                continue

            y, r, f = self.evaluate(xk + step.s)
            pred = step.predicted_reduction
            ratio = (fk - f) / pred if pred > 0 else (-np.inf if f >= fk else np.inf)
            new_delta = update_radius(ratio, state.delta, snorm, state.rho, cfg)
            t = replacement_score(iset, y, state.delta, protect=0)
            self.insert_point(t, y, r, f)
            state.delta = new_delta
            if ratio >= cfg.eta1:
                state.unsuccessful_streak = 0
            else:
                state.unsuccessful_streak += 1
                dist, far = self.far_points(state.delta)
                if far.any():
                    self.geometry_step(int(np.argmax(dist)), state.delta)
                elif (ratio < 0 and state.delta <= state.rho
                      and state.unsuccessful_streak >= cfg.unsuccessful_before_rho):
                    self.lower_rho(state, "unsuccessful")
                    state.unsuccessful_streak = 0
            state.xk, state.f_best = self.iset.xk, self.iset.fvals[0]
            self.notify(state)

    def criticality_phase(self, state, delta_init, omodel):
        """Shrink the radius and repoise until ``delta <= mu * ||g||``."""
        cfg = self.config
        self.stats["criticality_phases"] += 1
        radius = delta_init
        for i in range(cfg.criticality_max_passes):
            radius = cfg.omega_c**i * delta_init
            self.make_poised(radius)
            _, omodel = self.build_model(radius)
            if radius <= cfg.mu * float(np.linalg.norm(omodel.g)):
                return radius, omodel
            if radius <= cfg.rho_end:
                break
        self.stats["criticality_capped"] += 1
        return radius, omodel

    def run_faithful(self, state):
        cfg = self.config
        delta_init, rho_init = state.delta, state.rho
        while True:
            state.k += 1
            iset = self.iset
            if float(iset.offsets[0] @ iset.offsets[0]) >= 1e3 * delta_init**2:
                shift_base(iset, iset.xk)
            _, omodel = self.build_model(delta_init)
            if float(np.linalg.norm(omodel.g)) <= cfg.eps_c:
                state.delta, omodel = self.criticality_phase(state, delta_init, omodel)
                state.rho = min(rho_init, state.delta)
            else:
                state.delta, state.rho = delta_init, rho_init
            xk, fk = iset.xk, iset.fvals[0]
            step = self.trust_region_step(omodel, state.delta)
            snorm = float(np.linalg.norm(step.s))

            if snorm < cfg.gamma_s * state.rho:
                self.stats["safety_phases"] += 1
                delta_init = safety_radius(state.rho, state.delta, cfg)
                self.make_poised(delta_init)
                if delta_init == state.rho:
                    self.lower_rho(state, "safety")
                    rho_init, delta_init = state.rho, state.delta
                else:
                    rho_init = state.rho
                state.xk, state.f_best = self.iset.xk, self.iset.fvals[0]
                self.notify(state)
                continue

            y, r, f = self.evaluate(xk + step.s)
            pred = step.predicted_reduction
            ratio = (fk - f) / pred if pred > 0 else (-np.inf if f >= fk else np.inf)
            delta_init = update_radius(ratio, state.delta, snorm, state.rho, cfg)
            if ratio >= cfg.eta1:
                t = replacement_score(iset, y, state.delta)
                iset.replace(t, y, r, f)
                iset.make_iterate(t)
                rho_init = state.rho
                state.unsuccessful_streak = 0
            else:
                state.unsuccessful_streak += 1
                if not self.poised(delta_init)[0]:
                    self.make_poised(delta_init)
                    rho_init = state.rho
                elif delta_init == state.rho:
                    self.lower_rho(state, "unsuccessful")
                    rho_init, delta_init = state.rho, state.delta
                else:
                    rho_init = state.rho
            state.xk, state.f_best = self.iset.xk, self.iset.fvals[0]
            self.notify(state)


def solve(problem: Problem, config: SolverConfig | None = None, noise: NoiseSpec | None = None,
          callback=None, run: int = 0) -> SolveResult:
    """Minimize ``||r(x)||^2 / 2`` over the problem's box without derivatives.

    Parameters
    ----------
    problem : Problem
        Residual map, start point and bounds.
    config : SolverConfig, optional
        Algorithm parameters; defaults to practical mode with the standard
        constants.
    noise : NoiseSpec, optional
        Noise applied to every residual evaluation.
    callback : callable, optional
        Called synchronously with the :class:`TrustState` after each iteration.

    Returns
    -------
    SolveResult
        Best point found, termination status and the full evaluation trace.
    """
    config = (config or SolverConfig()).validate()
    noise = noise or NoiseSpec()
    started = time.perf_counter()
    job = _Run(problem, config, noise, callback, run)
    delta0 = config.delta0 or 0.1 * max(float(np.max(np.abs(problem.x0))) if problem.n else 0.0, 1.0)
    status = None
    state = None
    try:
        job.initial_set(delta0)
        if config.mode == "practical":
            job.adopt_best()
        state = TrustState(job.iset.xk, delta0, delta0, float(job.iset.fvals[0]))
        job.state = state
        if config.mode == "practical":
            job.run_practical(state)
        else:
            job.run_faithful(state)
    except _Stop as stop:
        status = stop.status
    except BudgetExhausted:
        status = "budget"
    except EvaluationFailure:
        status = "eval_failure"
    records = job.log.records
    if records:
        best = min(records, key=lambda rec: rec.f_noisy)
        x_final, f_final = best.point.copy(), best.f_noisy
    else:
        x_final, f_final = problem.x0.copy(), math.inf
    stats = dict(job.stats)
    if state is not None:
        stats["final_delta"] = float(state.delta)
        stats["final_rho"] = float(state.rho)
    stats["wall_time"] = time.perf_counter() - started
    _log.info("%s: %s after %d evaluations, f=%.6g", problem.name, status, job.budget.used, f_final)
    return SolveResult(x_final, f_final, job.budget.used, state.k if state else 0, status, job.log, stats,
                       job.iset)
