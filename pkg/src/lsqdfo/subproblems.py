"""Trust-region and geometry-improvement subproblems under ball and box constraints."""
from __future__ import annotations

from dataclasses import dataclass
from math import sqrt

import numpy as np

__all__ = [
    "TrustRegionStep",
    "CAUCHY_C1",
    "step_length_factor",
    "cauchy_bound",
    "solve_trs",
    "lin_max_ball_box",
    "geometry_point",
]

CAUCHY_C1 = 0.5
ZERO_THRESH = 1e-15


def step_length_factor(c1: float = CAUCHY_C1) -> float:
    """``2 c1 / (1 + sqrt(1 + 2 c1))``: lower-bound factor for Cauchy steps."""
    return 2.0 * c1 / (1.0 + sqrt(1.0 + 2.0 * c1))


def cauchy_bound(gnorm: float, delta: float, hnorm: float, c1: float = CAUCHY_C1) -> float:
    return c1 * gnorm * min(delta, gnorm / max(hnorm, 1.0))


@dataclass(frozen=True)
class TrustRegionStep:
    s: np.ndarray
    predicted_reduction: float
    cauchy_ok: bool
    bounds_active: bool = False
    step_bound_ok: bool = True
    iterations: int = 0


def _ball_step(y, d, delta) -> float:
    """Largest ``alpha >= 0`` with ``||y + alpha d|| = delta`` (needs ``||y|| <= delta``)."""
    dd = float(d @ d)
    if dd == 0.0:
        return 0.0
    yd = float(y @ d)
    gap = max(delta * delta - float(y @ y), 0.0)
    disc = sqrt(yd * yd + dd * gap)
    if yd > 0.0:
        return gap / (yd + disc)
    return (disc - yd) / dd


def _bound_step(s, d, sl, su, free):
    """Step to the first box face hit along ``d``; returns ``(alpha, index)``."""
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(d > 0, (su - s) / d, np.where(d < 0, (sl - s) / d, np.inf))
    t[~free] = np.inf
    i = int(np.argmin(t))
    return max(float(t[i]), 0.0), i


def _box(lower, upper, x):
    n = x.size
    lo = np.full(n, -np.inf) if lower is None else np.asarray(lower, dtype=float)
    hi = np.full(n, np.inf) if upper is None else np.asarray(upper, dtype=float)
    return lo - x, hi - x


def _reduction(model, s) -> float:
    js = model.J @ s
    return -(float(model.g @ s) + 0.5 * float(js @ js))


def _cauchy_path(model, delta, sl, su):
    """Piecewise steepest descent with exact line search; coordinates that hit
    the box are frozen and the search continues on the rest."""
    g = model.g
    n = g.size
    s = np.zeros(n)
    free = ~(((sl >= 0) & (g > 0)) | ((su <= 0) & (g < 0)))
    hit = not free.all()
    grad = g.copy()
    for _ in range(n):
        d = np.where(free, -g, 0.0)
        if not np.any(d):
            break
        hd = model.hess_vec(d)
        dhd = float(d @ hd)
        slope = float(grad @ d)
        if slope >= 0:
            break
        a_min = -slope / dhd if dhd > 0 else np.inf
        a_tr = _ball_step(s, d, delta)
        a_bd, i = _bound_step(s, d, sl, su, free)
        if a_min <= min(a_tr, a_bd):
            s += a_min * d
            break
        if a_tr <= a_bd:
            s += a_tr * d
            break
        s += a_bd * d
        s[i] = su[i] if d[i] > 0 else sl[i]
        free[i] = False
        hit = True
        grad = g + model.hess_vec(s)
    return s, hit


def _rotate_on_boundary(model, s, delta, sl, su, free, max_rotations, n_angles=24):
    """Improve a boundary step by turning it within span{s, -grad} on the sphere.

    If the best rotation runs into a box face, the step stops there and that
    coordinate is frozen (``free`` is updated in place). Returns ``(s, hit)``.
    """
    J, g = model.J, model.g
    red = _reduction(model, s)
    angles = np.linspace(0.0, 0.5 * np.pi, n_angles + 1)[1:]
    for _ in range(max_rotations):
        fixed = np.where(free, 0.0, s)
        sf = np.where(free, s, 0.0)
        sf2 = float(sf @ sf)
        if sf2 == 0.0:
            break
        grad = np.where(free, g + model.hess_vec(s), 0.0)
        tang = -grad + (float(grad @ sf) / sf2) * sf
        tnorm = np.linalg.norm(tang)
        if tnorm <= 1e-12 * max(np.linalg.norm(grad), 1e-300):
            break
        tang *= sqrt(sf2) / tnorm
        js_fixed, js_f, js_t = J @ fixed, J @ sf, J @ tang
        gfix, gf, gt = float(g @ fixed), float(g @ sf), float(g @ tang)

        def reduction_at(theta):
            c, sn = np.cos(theta), np.sin(theta)
            js = js_fixed + c * js_f + sn * js_t
            return -(gfix + c * gf + sn * gt + 0.5 * float(js @ js))

        def violation(theta):
            cand = (np.cos(theta) * sf + np.sin(theta) * tang)[free]
            return np.maximum(cand - su[free], sl[free] - cand)

        feasible, blocked = [], None
        for theta in angles:
            if np.any(violation(theta) > 0):
                blocked = theta
                break
            feasible.append(theta)
        vals = [reduction_at(th) for th in feasible]
        k = int(np.argmax(vals)) if vals else -1
        theta, best = (feasible[k], vals[k]) if vals else (0.0, red)
        if blocked is not None and k == len(feasible) - 1:
            # the best sample is next to a box face: locate the crossing
            lo, hi = theta, blocked
            for _ in range(60):
                mid = 0.5 * (lo + hi)
                if np.any(violation(mid) > 0):
                    hi = mid
                else:
                    lo = mid
            v_hit = reduction_at(lo)
            if v_hit > max(best, red):
                idx = np.flatnonzero(free)[int(np.argmax(violation(hi)))]
                s = fixed + np.cos(lo) * sf + np.sin(lo) * tang
                s[idx] = su[idx] if s[idx] > 0.5 * (su[idx] + sl[idx]) else sl[idx]
                free[idx] = False
                return s, True
        if 0 < k < len(feasible) - 1:
            # parabolic refinement through the neighbouring samples
            h = feasible[1] - feasible[0]
            v0, v1, v2 = vals[k - 1], vals[k], vals[k + 1]
            denom = v0 - 2.0 * v1 + v2
            if denom < 0:
                th = theta + 0.5 * h * (v0 - v2) / denom
                vth = reduction_at(th)
                if vth > best:
                    theta, best = th, vth
        if best <= red:
            break
        gain = best - red
        s = fixed + np.cos(theta) * sf + np.sin(theta) * tang
        red = best
        if gain <= 0.01 * red:
            break
    return s, False


def _truncated_cg(model, s, free, delta, sl, su, max_iter, tol):
    """Steihaug CG on the free variables from ``s``; a box hit freezes that
    coordinate and restarts. ``free`` is updated in place."""
    g = model.g
    s = s.copy()
    grad = g + model.hess_vec(s)
    d = np.where(free, -grad, 0.0)
    rr = float(d @ d)
    on_sphere = hit = False
    it = 0
    while it < max_iter and sqrt(rr) > tol:
        it += 1
        hd = model.hess_vec(d)
        dhd = float(d @ hd)
        slope = float(grad @ d)
        a_min = -slope / dhd if dhd > 0 else np.inf
        a_tr = _ball_step(s, d, delta)
        a_bd, i = _bound_step(s, d, sl, su, free)
        if a_tr <= min(a_min, a_bd):
            s += a_tr * d
            on_sphere = True
            break
        if a_bd < a_min:
            s += a_bd * d
            s[i] = su[i] if d[i] > 0 else sl[i]
            free[i] = False
            hit = True
            grad = g + model.hess_vec(s)
            d = np.where(free, -grad, 0.0)
            rr = float(d @ d)
            continue
        s += a_min * d
        grad += a_min * hd
        gf = np.where(free, grad, 0.0)
        rr_new = float(gf @ gf)
        d = -gf + (rr_new / rr) * d
        rr = rr_new
    return s, on_sphere, hit, it


def _release_candidate(model, s, free, delta, sl, su):
    """Frozen coordinate with the most wrong-signed bound multiplier, if any."""
    fixed = ~free
    if not fixed.any():
        return None
    grad = model.g + model.hess_vec(s)
    lam = 0.0
    if float(np.linalg.norm(s)) >= delta * (1 - 1e-10):
        sf = np.where(free, s, 0.0)
        sf2 = float(sf @ sf)
        if sf2 > 0:
            lam = max(0.0, -float(grad @ sf) / sf2)
    kkt = grad + lam * s
    viol = np.where(s <= sl, -kkt, kkt)
    viol[free] = -np.inf
    i = int(np.argmax(viol))
    if viol[i] <= 1e-10 * max(float(np.linalg.norm(model.g)), 1e-300):
        return None
    return i


def solve_trs(model, delta, xk, lower=None, upper=None, max_iter=None) -> TrustRegionStep:
    """Approximately minimize the model inside the trust region and the box.

    Truncated conjugate gradients on the free variables, restarted whenever a
    box face is reached; a boundary step is then refined by rotations on the
    sphere, and coordinates frozen on a bound are released when their
    multiplier has the wrong sign. The result is never worse than the
    generalized Cauchy point, which carries the sufficient-decrease guarantee.

    Parameters
    ----------
    model : ObjectiveModel
        Quadratic model with gradient ``g`` and factored Hessian ``J'J``.
    delta : float
        Trust-region radius.
    xk : array_like
        Current iterate, used only to translate the bounds.
    lower, upper : array_like, optional
        Box constraints on ``xk + s``.
    """
    g = model.g
    n = g.size
    xk = np.asarray(xk, dtype=float)
    sl, su = _box(lower, upper, xk)
    gnorm = float(np.linalg.norm(g))
    if gnorm == 0.0:
        return TrustRegionStep(np.zeros(n), 0.0, True, False, True, 0)
    max_iter = 10 * n if max_iter is None else max_iter
    tol = 1e-8 * max(1.0, gnorm)

    s = np.zeros(n)
    free = ~(((sl >= 0) & (g > 0)) | ((su <= 0) & (g < 0)))
    bounds_hit = not free.all()
    s, on_sphere, hit, it = _truncated_cg(model, s, free, delta, sl, su, max_iter, tol)
    bounds_hit |= hit
    for _ in range(2 * n + 2):
        if on_sphere:
            s, hit = _rotate_on_boundary(model, s, delta, sl, su, free, max_rotations=max(n, 2))
            if hit:
                bounds_hit = True
                s, on_sphere, _, k = _truncated_cg(model, s, free, delta, sl, su, max_iter, tol)
                it += k
                continue
        i = _release_candidate(model, s, free, delta, sl, su)
        if i is None:
            break
        # a frozen coordinate wants to move back inside: free it and resume
        free[i] = True
        s, on_sphere, hit, k = _truncated_cg(model, s, free, delta, sl, su, max_iter, tol)
        bounds_hit |= hit
        it += k

    sc, cauchy_hit = _cauchy_path(model, delta, sl, su)
    pred = _reduction(model, s)
    pred_c = _reduction(model, sc)
    if pred_c > pred:
        s, pred = sc, pred_c
    # guard against round-off just outside the feasible region
    s = np.clip(s, sl, su)
    snorm = float(np.linalg.norm(s))
    if snorm > delta:
        s *= delta / snorm
        snorm = delta
    pred = _reduction(model, s)

    hnorm = model.hess_norm
    bound = cauchy_bound(gnorm, delta, hnorm)
    slack = 1e-10 * (abs(float(g @ s)) + pred) + 1e-300
    cauchy_ok = pred >= bound - slack
    lemma_ok = snorm >= step_length_factor() * min(delta, gnorm / max(hnorm, 1.0)) * (1 - 1e-10)
    active = bounds_hit or cauchy_hit
    return TrustRegionStep(s, pred, bool(cauchy_ok), bool(active), bool(lemma_ok), it)


def lin_max_ball_box(g, delta, xk, lower=None, upper=None) -> np.ndarray:
    """Maximize ``g'y`` over ``||y - xk|| <= delta`` and ``lower <= y <= upper``.

    Active-set sweep: step along the free part of ``g`` to the sphere; if that
    leaves the box, stop at the first face crossed, freeze that coordinate on
    its bound and repeat. At most ``n`` passes.
    """
    g = np.asarray(g, dtype=float)
    xk = np.asarray(xk, dtype=float)
    n = g.size
    a, b = _box(lower, upper, xk)
    y = np.zeros(n)
    gmax = np.max(np.abs(g)) if n else 0.0
    if gmax == 0.0:
        return xk.copy()
    d = np.where(np.abs(g) > ZERO_THRESH * gmax, g, 0.0)
    free = d != 0
    for _ in range(n):
        if not free.any():
            break
        alpha = _ball_step(y, d, delta)
        trial = y + alpha * d
        if not (np.any(trial[free] > b[free]) or np.any(trial[free] < a[free])):
            y = trial
            break
        beta, i = _bound_step(y, d, a, b, free)
        y = y + beta * d
        y[i] = b[i] if d[i] > 0 else a[i]
        d[i] = 0.0
        free[i] = False
    return xk + np.clip(y, a, b)


def geometry_point(iset, t, center, delta, lower=None, upper=None) -> np.ndarray:
    """Point of ``B(center, delta)`` (within the box) maximizing ``|L_t|``.

    Both ``+grad L_t`` and ``-grad L_t`` are tried; ties favour ``+grad L_t``.
    """
    basis = iset.lagrange()
    gt = basis.grads[t]
    center = np.asarray(center, dtype=float)
    if not np.any(gt):
        return center.copy()
    y_up = lin_max_ball_box(gt, delta, center, lower, upper)
    y_dn = lin_max_ball_box(-gt, delta, center, lower, upper)
    if abs(basis(y_up)[t]) >= abs(basis(y_dn)[t]):
        return y_up
    return y_dn
