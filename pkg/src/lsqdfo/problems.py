"""Least-squares test problems, noisy evaluation and evaluation budgets.

The residual functions follow the Moré, Garbow & Hillstrom definitions as
used in the Moré & Wild benchmark set, plus the discretized integral
equation problem (``integreq``) whose dimension is a free parameter.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = [
    "Problem",
    "NoiseSpec",
    "EvalBudget",
    "BudgetExhausted",
    "EvaluationFailure",
    "ConfigurationError",
    "NOISE_KINDS",
    "PROBLEM_NAMES",
    "evaluate",
    "objective",
    "get_problem",
    "build_suite",
    "suite_manifest",
    "integreq",
]

NOISE_KINDS = ("none", "mult_gaussian", "add_gaussian", "add_chi2")


class ConfigurationError(ValueError):
    """Raised for unknown problem ids or invalid settings."""


class BudgetExhausted(RuntimeError):
    """Raised when an evaluation is requested with no budget left."""

    status = "budget"


class EvaluationFailure(RuntimeError):
    """Raised when the residual map returns non-finite values."""

    status = "eval_failure"


@dataclass(frozen=True)
class Problem:
    name: str
    n: int
    m: int
    residual: Callable[[np.ndarray], np.ndarray]
    x0: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    two_f0: float
    two_fstar: float
    table_id: int | None = None

    def __post_init__(self):
        for attr in ("x0", "lower", "upper"):
            arr = np.array(getattr(self, attr), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, attr, arr)
        if not (self.x0.shape == self.lower.shape == self.upper.shape == (self.n,)):
            raise ConfigurationError(f"{self.name}: inconsistent dimensions")
        if np.any(self.lower > self.x0) or np.any(self.x0 > self.upper):
            raise ConfigurationError(f"{self.name}: x0 outside bounds")
        if self.two_fstar > self.two_f0:
            raise ConfigurationError(f"{self.name}: two_fstar exceeds two_f0")

    @property
    def f0(self) -> float:
        return 0.5 * self.two_f0

    @property
    def fstar(self) -> float:
        return 0.5 * self.two_fstar

    @property
    def bounded(self) -> bool:
        return bool(np.any(np.isfinite(self.lower)) or np.any(np.isfinite(self.upper)))


@dataclass(frozen=True)
class NoiseSpec:
    kind: str = "none"
    sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise ConfigurationError(f"unknown noise kind {self.kind!r}")
        if not self.sigma >= 0:
            raise ConfigurationError("noise sigma must be non-negative")

    @property
    def deterministic(self) -> bool:
        return self.kind == "none" or self.sigma == 0.0


@dataclass
class EvalBudget:
    max_evals: int
    used: int = 0

    @property
    def remaining(self) -> int:
        return self.max_evals - self.used

    @property
    def exhausted(self) -> bool:
        return self.used >= self.max_evals


def _noise_draws(noise: NoiseSpec, ordinal: int, m: int) -> np.ndarray:
    # Philox is counter based: the call ordinal lives in the top counter word,
    # so every call gets its own reproducible stream.
    bitgen = np.random.Philox(key=noise.seed, counter=[0, 0, 0, ordinal])
    return noise.sigma * np.random.Generator(bitgen).standard_normal(m)


def evaluate(problem: Problem, x, noise: NoiseSpec, budget: EvalBudget) -> np.ndarray:
    """Evaluate the (possibly perturbed) residual vector at ``x``.

    Each call consumes exactly one unit of ``budget``. The noise draw depends
    only on ``noise.seed`` and the call ordinal (``budget.used`` before the
    call), so a rerun with the same seed reproduces every value bit for bit.

    Raises
    ------
    BudgetExhausted
        If ``budget`` has no evaluations left.
    EvaluationFailure
        If the residual contains NaN or infinite entries.
    """
    if budget.exhausted:
        raise BudgetExhausted(f"budget of {budget.max_evals} evaluations exhausted")
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise EvaluationFailure("non-finite evaluation point")
    ordinal = budget.used
    budget.used += 1
    r = np.asarray(problem.residual(x), dtype=float)
    if not np.all(np.isfinite(r)):
        raise EvaluationFailure(f"non-finite residual at evaluation {ordinal + 1}")
    if noise.deterministic:
        return r
    eps = _noise_draws(noise, ordinal, r.size)
    if noise.kind == "mult_gaussian":
        return r * (1.0 + eps)
    if noise.kind == "add_gaussian":
        return r + eps
    return np.sqrt(r**2 + eps**2)


def objective(rvec) -> float:
    r = np.asarray(rvec, dtype=float)
    return 0.5 * float(np.dot(r, r))


# --- residual definitions -------------------------------------------------

_BARD_Y = np.array(
    [0.14, 0.18, 0.22, 0.25, 0.29, 0.32, 0.35, 0.39,
     0.37, 0.58, 0.73, 0.96, 1.34, 2.10, 4.39]
)
_KOWALIK_U = np.array(
    [4.0, 2.0, 1.0, 0.5, 0.25, 0.167, 0.125, 0.1, 0.0833, 0.0714, 0.0625]
)
_KOWALIK_Y = np.array(
    [0.1957, 0.1947, 0.1735, 0.16, 0.0844, 0.0627,
     0.0456, 0.0342, 0.0323, 0.0235, 0.0246]
)


def rosenbrock(x):
    return np.array([10.0 * (x[1] - x[0] ** 2), 1.0 - x[0]])


def helical_valley(x):
    if x[0] > 0:
        theta = np.arctan(x[1] / x[0]) / (2 * np.pi)
    elif x[0] < 0:
        theta = np.arctan(x[1] / x[0]) / (2 * np.pi) + 0.5
    else:
        theta = 0.25 * np.sign(x[1])
    return np.array([
        10.0 * (x[2] - 10.0 * theta),
        10.0 * (np.hypot(x[0], x[1]) - 1.0),
        x[2],
    ])


def powell_singular(x):
    return np.array([
        x[0] + 10.0 * x[1],
        np.sqrt(5.0) * (x[2] - x[3]),
        (x[1] - 2.0 * x[2]) ** 2,
        np.sqrt(10.0) * (x[0] - x[3]) ** 2,
    ])


def freudenstein_roth(x):
    return np.array([
        -13.0 + x[0] + ((5.0 - x[1]) * x[1] - 2.0) * x[1],
        -29.0 + x[0] + ((x[1] + 1.0) * x[1] - 14.0) * x[1],
    ])


def bard(x):
    u = np.arange(1, 16, dtype=float)
    v = 16.0 - u
    w = np.minimum(u, v)
    return _BARD_Y - (x[0] + u / (v * x[1] + w * x[2]))


def kowalik_osborne(x):
    u = _KOWALIK_U
    return _KOWALIK_Y - x[0] * u * (u + x[1]) / (u * (u + x[2]) + x[3])


def watson(x):
    n = x.size
    t = np.arange(1, 30) / 29.0
    powers = t[:, None] ** np.arange(n)
    s1 = powers[:, : n - 1] @ (np.arange(1, n) * x[1:])
    s2 = powers @ x
    return np.concatenate([s1 - s2**2 - 1.0, [x[0], x[1] - x[0] ** 2 - 1.0]])


def box3d(x, m=10):
    t = 0.1 * np.arange(1, m + 1)
    return (np.exp(-t * x[0]) - np.exp(-t * x[1])
            - x[2] * (np.exp(-t) - np.exp(-10.0 * t)))


def brown_dennis(x, m=20):
    t = np.arange(1, m + 1) / 5.0
    a = x[0] + t * x[1] - np.exp(t)
    b = x[2] + x[3] * np.sin(t) - np.cos(t)
    return a**2 + b**2


def chebyquad(x, m=None):
    n = x.size
    m = n if m is None else m
    z = 2.0 * x - 1.0
    # Chebyshev recurrence for the shifted polynomials T_j(2x - 1), j = 1..m
    tprev, tcur = np.ones(n), z.copy()
    fvec = np.empty(m)
    for j in range(m):
        fvec[j] = tcur.mean()
        tprev, tcur = tcur, 2.0 * z * tcur - tprev
    even = np.arange(2, m + 1, 2)
    fvec[even - 1] += 1.0 / (even**2 - 1.0)
    return fvec


def brown_almost_linear(x):
    n = x.size
    fvec = x + x.sum() - (n + 1.0)
    fvec[-1] = np.prod(x) - 1.0
    return fvec


def bdqrtic(x):
    n = x.size
    k = n - 4
    quad = (x[:k] ** 2 + 2.0 * x[1 : k + 1] ** 2 + 3.0 * x[2 : k + 2] ** 2
            + 4.0 * x[3 : k + 3] ** 2 + 5.0 * x[-1] ** 2)
    return np.concatenate([-4.0 * x[:k] + 3.0, quad])


def cube(x):
    fvec = np.empty_like(x)
    fvec[0] = x[0] - 1.0
    fvec[1:] = 10.0 * (x[1:] - x[:-1] ** 3)
    return fvec


def integreq(x):
    """Discrete integral equation residual with grid ``t_i = i / (n + 1)``."""
    n = x.size
    h = 1.0 / (n + 1)
    t = np.arange(1, n + 1) * h
    w = (x + t + 1.0) ** 3
    below = np.cumsum(t * w)
    above = np.zeros(n)
    above[:-1] = np.cumsum(((1.0 - t) * w)[::-1])[::-1][1:]
    return x + 0.5 * h * ((1.0 - t) * below + t * above)


def _integreq_start(n):
    t = np.arange(1, n + 1) / (n + 1.0)
    return t * (t - 1.0)


# name -> (table id, residual, x0, m, 2f(x0), 2f*)
_TABLE = {
    "rosenbrock": (7, rosenbrock, [-1.2, 1.0], 2, 24.2, 0.0),
    "rosenbrock_far": (8, rosenbrock, [-12.0, 10.0], 2, 1.795769e6, 0.0),
    "helical_valley": (9, helical_valley, [-1.0, 0.0, 0.0], 3, 2500.0, 0.0),
    "powell_singular": (11, powell_singular, [3.0, -1.0, 0.0, 1.0], 4, 215.0, 0.0),
    "freudenstein_roth": (13, freudenstein_roth, [0.5, -2.0], 2, 400.5, 48.98425),
    "bard": (15, bard, [1.0, 1.0, 1.0], 15, 41.68170, 8.214877e-3),
    "kowalik_osborne": (17, kowalik_osborne, [0.25, 0.39, 0.415, 0.39], 11,
                        5.313172e-3, 3.075056e-4),
    "watson6": (19, watson, [0.5] * 6, 31, 16.43083, 2.287670e-3),
    "box3d": (25, box3d, [0.0, 10.0, 20.0], 10, 1031.154, 0.0),
    "brown_dennis": (27, brown_dennis, [25.0, 5.0, -5.0, -1.0], 20, 7.926693e6, 8.582220e4),
    "chebyquad6": (29, chebyquad, list(np.arange(1, 7) / 7.0), 6, 4.642817e-2, 0.0),
    "brown_almost_linear": (35, brown_almost_linear, [0.5] * 10, 10, 273.2480, 0.0),
    "bdqrtic8": (39, bdqrtic, [1.0] * 8, 8, 904.0, 10.23897),
    "cube5": (43, cube, [0.5] * 5, 5, 56.5, 0.0),
}

#: Problems carrying Table-D reference values, in table order.
TABLE_PROBLEMS = tuple(_TABLE)
PROBLEM_NAMES = TABLE_PROBLEMS + ("integreq",)

INTEGREQ_DEFAULT_N = 100


def _make_integreq(n: int) -> Problem:
    if n < 1:
        raise ConfigurationError("integreq needs n >= 1")
    x0 = _integreq_start(n)
    r0 = integreq(x0)
    name = "integreq" if n == INTEGREQ_DEFAULT_N else f"integreq:{n}"
    return Problem(
        name=name, n=n, m=n, residual=integreq, x0=x0,
        lower=np.full(n, -np.inf), upper=np.full(n, np.inf),
        two_f0=float(r0 @ r0), two_fstar=0.0,
    )


def get_problem(name: str) -> Problem:
    """Look up a problem by id.

    ``integreq`` takes an optional dimension suffix, e.g. ``integreq:200``.
    """
    base, _, arg = name.partition(":")
    if base == "integreq":
        try:
            n = int(arg) if arg else INTEGREQ_DEFAULT_N
        except ValueError:
            raise ConfigurationError(f"bad integreq dimension in {name!r}") from None
        return _make_integreq(n)
    if arg or base not in _TABLE:
        raise ConfigurationError(f"unknown problem id {name!r}")
    table_id, fun, x0, m, two_f0, two_fstar = _TABLE[base]
    x0 = np.array(x0, dtype=float)
    n = x0.size
    return Problem(
        name=base, n=n, m=m, residual=fun, x0=x0,
        lower=np.full(n, -np.inf), upper=np.full(n, np.inf),
        two_f0=two_f0, two_fstar=two_fstar, table_id=table_id,
    )


def build_suite(names=None) -> list[Problem]:
    if names is None:
        names = PROBLEM_NAMES
    return [get_problem(name) for name in names]


def suite_manifest(problems) -> list[dict]:
    return [
        {"name": p.name, "n": p.n, "m": p.m, "two_f0": p.two_f0, "two_fstar": p.two_fstar}
        for p in problems
    ]
