"""Linear interpolation sets, Lagrange polynomials and point selection.

Points are stored as offsets from a base point ``x_b`` so that the small
differences ``y_t - x_k`` are formed from small numbers. Row 0 of the set is
always the current iterate ``x_k``.
"""
from __future__ import annotations

import dataclasses
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgWarning, lu_factor, lu_solve

from .subproblems import lin_max_ball_box

__all__ = [
    "DegenerateGeometry",
    "InterpolationSet",
    "LagrangeBasis",
    "solve_jacobian",
    "lagrange_basis",
    "lagrange_maxima",
    "poisedness",
    "replacement_score",
    "replacement_scores",
    "sigma_identity_check",
    "shift_base",
    "geometry_dump",
]

#: W is declared singular when a pivot falls below this multiple of ||W||_inf.
PIVOT_TOL = 1e-14


class DegenerateGeometry(ArithmeticError):
    """The interpolation matrix is numerically singular."""


@dataclass(frozen=True)
class LagrangeBasis:
    """Affine Lagrange polynomials ``L_t(y) = const[t] + grads[t] @ (y - x_k)``."""

    base: np.ndarray
    center_offset: np.ndarray  # x_k - x_b
    const: np.ndarray
    grads: np.ndarray  # (n+1, n)

    @property
    def center(self) -> np.ndarray:
        return self.base + self.center_offset

    def at_offset(self, d) -> np.ndarray:
        """Values of all polynomials at ``y = x_b + d``; ``d`` may be (k, n)."""
        d = np.asarray(d, dtype=float)
        return self.const + (d - self.center_offset) @ self.grads.T

    def __call__(self, y) -> np.ndarray:
        return self.at_offset(np.asarray(y, dtype=float) - self.base)


class InterpolationSet:
    """``n + 1`` interpolation points with their residual values.

    Parameters
    ----------
    base : array_like, shape (n,)
        Base point ``x_b``.
    offsets : array_like, shape (n+1, n)
        Rows ``y_t - x_b``; row 0 is the current iterate.
    rvals : array_like, shape (n+1, m)
        Residual vectors recorded at each point.
    fvals : array_like, shape (n+1,), optional
        Objective values; computed from ``rvals`` when omitted.
    """

    def __init__(self, base, offsets, rvals, fvals=None):
        self.base = np.array(base, dtype=float)
        self.offsets = np.array(offsets, dtype=float)
        self.rvals = np.array(rvals, dtype=float)
        if self.rvals.ndim == 1:
            self.rvals = self.rvals[:, None]
        n = self.base.size
        if self.offsets.shape != (n + 1, n) or self.rvals.shape[0] != n + 1:
            raise ValueError("interpolation set needs n+1 points in R^n")
        if fvals is None:
            fvals = 0.5 * np.sum(self.rvals**2, axis=1)
        self.fvals = np.array(fvals, dtype=float)
        self._lu = None
        self._basis = None

    @classmethod
    def from_points(cls, points, rvals, base=None, fvals=None):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        base = points[0].copy() if base is None else np.asarray(base, dtype=float)
        return cls(base, points - base, rvals, fvals)

    @property
    def n(self) -> int:
        return self.base.size

    @property
    def m(self) -> int:
        return self.rvals.shape[1]

    @property
    def points(self) -> np.ndarray:
        return self.base + self.offsets

    @property
    def xk(self) -> np.ndarray:
        return self.base + self.offsets[0]

    @property
    def directions(self) -> np.ndarray:
        """Shifted interpolation matrix ``W`` with rows ``(y_t - x_k)``, t >= 1."""
        return self.offsets[1:] - self.offsets[0]

    @property
    def nbytes(self) -> int:
        total = self.base.nbytes + self.offsets.nbytes + self.rvals.nbytes + self.fvals.nbytes
        if self._lu is not None:
            total += self._lu[0].nbytes + self._lu[1].nbytes
        return total

    def best_index(self) -> int:
        return int(np.argmin(self.fvals))

    def distances(self) -> np.ndarray:
        """Distance of every point from the current iterate."""
        return np.linalg.norm(self.offsets - self.offsets[0], axis=1)

    def invalidate(self):
        self._lu = None
        self._basis = None

    def replace(self, t: int, point, rvec, f=None):
        rvec = np.asarray(rvec, dtype=float)
        self.offsets[t] = np.asarray(point, dtype=float) - self.base
        self.rvals[t] = rvec
        self.fvals[t] = 0.5 * float(rvec @ rvec) if f is None else f
        self.invalidate()

    def make_iterate(self, t: int):
        """Move point ``t`` to row 0 so that it becomes ``x_k``."""
        if t == 0:
            return
        for arr in (self.offsets, self.rvals, self.fvals):
            arr[[0, t]] = arr[[t, 0]]
        self.invalidate()

    def factor(self):
        """LU factorization of ``W``, computed once per geometry change."""
        if self._lu is None:
            w = self.directions
            scale = np.linalg.norm(w, np.inf)
            if self.n == 0:
                raise DegenerateGeometry("empty interpolation system")
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", LinAlgWarning)
                lu, piv = lu_factor(w, check_finite=False)
            pivots = np.abs(np.diag(lu))
            if not scale > 0 or not np.all(np.isfinite(lu)) or pivots.min() < PIVOT_TOL * scale:
                raise DegenerateGeometry("interpolation matrix W is singular")
            self._lu = (lu, piv)
        return self._lu

    def solve(self, rhs) -> np.ndarray:
        return lu_solve(self.factor(), rhs, check_finite=False)

    def lagrange(self) -> LagrangeBasis:
        if self._basis is None:
            n = self.n
            rhs = np.hstack([-np.ones((n, 1)), np.eye(n)])
            grads = self.solve(rhs).T
            const = np.zeros(n + 1)
            const[0] = 1.0
            self._basis = LagrangeBasis(self.base.copy(), self.offsets[0].copy(), const, grads)
        return self._basis

    def copy(self) -> "InterpolationSet":
        return InterpolationSet(self.base, self.offsets, self.rvals, self.fvals)


def solve_jacobian(iset: InterpolationSet) -> np.ndarray:
    """Model Jacobian from the ``n x n`` interpolation system.

    One factorization of ``W`` is shared by all ``m`` right-hand sides
    ``r_i(y_t) - r_i(x_k)``.

    Raises
    ------
    DegenerateGeometry
        If ``W`` is numerically singular.
    """
    rhs = iset.rvals[1:] - iset.rvals[0]
    return iset.solve(rhs).T


def lagrange_basis(iset: InterpolationSet) -> LagrangeBasis:
    return iset.lagrange()


def lagrange_maxima(iset: InterpolationSet, center, radius, lower=None, upper=None):
    """Maximize each ``|L_t|`` over the ball ``B(center, radius)`` and the box.

    Returns ``(values, maximizers)`` with one entry per polynomial.
    """
    basis = iset.lagrange()
    n = iset.n
    center = np.asarray(center, dtype=float)
    values = np.empty(n + 1)
    argmax = np.empty((n + 1, n))
    for t in range(n + 1):
        gt = basis.grads[t]
        cands = [lin_max_ball_box(gt, radius, center, lower, upper),
                 lin_max_ball_box(-gt, radius, center, lower, upper)]
        vals = [abs(basis(y)[t]) for y in cands]
        best = 0 if vals[0] >= vals[1] else 1
        values[t] = vals[best]
        argmax[t] = cands[best]
    return values, argmax


def poisedness(iset: InterpolationSet, center, radius, lower=None, upper=None) -> float:
    """Largest ``|L_t(x)|`` over all t and all x in the ball/box region.

    Returns ``inf`` when the set is not poised.
    """
    if not radius > 0:
        raise ValueError("radius must be positive")
    try:
        values, _ = lagrange_maxima(iset, center, radius, lower, upper)
    except DegenerateGeometry:
        return np.inf
    return float(values.max())


def replacement_scores(iset: InterpolationSet, candidate, delta) -> np.ndarray:
    """``|L_j(y+)| * max(||y_j - x_k||^4 / delta^4, 1)`` for every j."""
    sigma = iset.lagrange()(candidate)
    dist = iset.distances()
    return np.abs(sigma) * np.maximum((dist / delta) ** 4, 1.0)


def replacement_score(iset: InterpolationSet, candidate, delta, protect=None) -> int:
    """Index of the point to drop when ``candidate`` joins the set.

    The point with the lowest recorded objective (or ``protect`` when given)
    is never selected; ties go to the lowest index.
    """
    scores = replacement_scores(iset, candidate, delta)
    protect = iset.best_index() if protect is None else protect
    scores[protect] = -np.inf
    return int(np.argmax(scores))


def sigma_identity_check(iset: InterpolationSet, candidate) -> float:
    """Max discrepancy between Sherman-Morrison denominators and ``L_t(y+)``.

    The denominators use an explicit inverse of ``W`` rather than the LU
    factors behind the Lagrange basis.
    """
    w = iset.directions
    winv = np.linalg.inv(w)
    offset = np.asarray(candidate, dtype=float) - iset.base
    n = iset.n
    sigma = np.empty(n + 1)
    # y_0 = x_k moving: W gains e (x_k - y+)^T
    sigma[0] = 1.0 + (iset.offsets[0] - offset) @ winv.sum(axis=1)
    # y_t moving: W gains e_t (y+ - y_t)^T
    for t in range(1, n + 1):
        sigma[t] = 1.0 + (offset - iset.offsets[t]) @ winv[:, t - 1]
    lag = iset.lagrange().at_offset(offset)
    return float(np.max(np.abs(sigma - lag)))


def shift_base(iset: InterpolationSet, new_base, model=None):
    """Re-express the set (and optionally a residual model) about ``new_base``.

    The model constant absorbs ``J @ (new_base - x_b)`` so predictions are
    unchanged. Returns ``(iset, model)``; the set is modified in place.
    """
    new_base = np.asarray(new_base, dtype=float)
    db = new_base - iset.base
    iset.offsets -= db
    iset.base = new_base.copy()
    iset.invalidate()
    if model is not None:
        model = dataclasses.replace(model, base=new_base.copy(), c=model.c + model.J @ db)
    return iset, model


def geometry_dump(iset: InterpolationSet, delta=None, lower=None, upper=None) -> dict:
    """JSON-ready snapshot of the set for post-mortem analysis."""
    out = {
        "n": iset.n,
        "m": iset.m,
        "base": iset.base.tolist(),
        "points": iset.points.tolist(),
        "fvals": iset.fvals.tolist(),
        "distances": iset.distances().tolist(),
    }
    w = iset.directions
    out["w_condition"] = float(np.linalg.cond(w)) if iset.n else None
    if delta is not None:
        try:
            values, _ = lagrange_maxima(iset, iset.xk, delta, lower, upper)
            out["lagrange_max"] = values.tolist()
            out["poisedness"] = float(values.max())
        except DegenerateGeometry:
            out["lagrange_max"] = None
            out["poisedness"] = None
        out["delta"] = float(delta)
    return out
