"""Affine residual models and the Gauss-Newton objective model built on them."""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .interp import InterpolationSet, solve_jacobian

__all__ = [
    "ResidualModel",
    "ObjectiveModel",
    "build_objective_model",
    "model_value",
    "model_value_residual_form",
    "DENSE_HESSIAN_MAX_N",
]

#: Above this dimension the Gauss-Newton Hessian is never formed explicitly.
DENSE_HESSIAN_MAX_N = 64


@dataclass(frozen=True)
class ResidualModel:
    """``r(y) ~ c + J (y - base)``."""

    base: np.ndarray
    c: np.ndarray
    J: np.ndarray

    def __call__(self, offset) -> np.ndarray:
        # offset may be a single point (n,) or a batch (k, n)
        return self.c + np.asarray(offset, dtype=float) @ self.J.T

    def predict(self, y) -> np.ndarray:
        return self(np.asarray(y, dtype=float) - self.base)

    @property
    def nbytes(self) -> int:
        return self.base.nbytes + self.c.nbytes + self.J.nbytes


@dataclass(frozen=True)
class ObjectiveModel:
    """Quadratic ``m(s) = f0 + g's + s'Hs/2`` with ``H = J'J`` kept in factored form.

    ``r0`` is the residual at ``x_k``, kept so the model can also be evaluated
    as ``||r0 + J s||^2 / 2``.
    """

    f0: float
    g: np.ndarray
    J: np.ndarray
    r0: np.ndarray
    H: np.ndarray | None = None

    @property
    def n(self) -> int:
        return self.g.size

    def hess_vec(self, v) -> np.ndarray:
        if self.H is not None:
            return self.H @ v
        return self.J.T @ (self.J @ v)

    @cached_property
    def hess_norm(self) -> float:
        """``||H|| = ||J||^2`` (spectral norm)."""
        if self.J.size == 0:
            return 0.0
        return float(np.linalg.norm(self.J, 2)) ** 2

    @property
    def nbytes(self) -> int:
        total = self.g.nbytes + self.J.nbytes + self.r0.nbytes
        return total + (0 if self.H is None else self.H.nbytes)


def build_objective_model(iset: InterpolationSet):
    """Interpolate the residuals on ``iset`` and form the Gauss-Newton model.

    Returns
    -------
    (ResidualModel, ObjectiveModel)
        The residual model is expressed about the set's base point and the
        objective model about the current iterate ``x_k``.
    """
    J = solve_jacobian(iset)
    r0 = iset.rvals[0].copy()
    c = r0 - J @ iset.offsets[0]
    rmodel = ResidualModel(iset.base.copy(), c, J)
    H = J.T @ J if iset.n <= DENSE_HESSIAN_MAX_N else None
    omodel = ObjectiveModel(0.5 * float(r0 @ r0), J.T @ r0, J, r0, H)
    return rmodel, omodel


def model_value(model: ObjectiveModel, s, check: bool = False) -> float:
    s = np.asarray(s, dtype=float)
    js = model.J @ s
    value = model.f0 + float(model.g @ s) + 0.5 * float(js @ js)
    if check:
        other = model_value_residual_form(model, s)
        scale = max(abs(value), abs(other), model.f0, 1e-300)
        assert abs(value - other) <= 1e-12 * scale + 1e-15, (value, other)
    return value


def model_value_residual_form(model: ObjectiveModel, s) -> float:
    res = model.r0 + model.J @ np.asarray(s, dtype=float)
    return 0.5 * float(res @ res)
