"""Weighted Lp distances and best approximation inside a mechanism's cone."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.optimize import nnls

from .curves import CurveError, DemandCurve, step_curve
from .mechanism import Basis, ConeCoefficients, lob_basis, synthesize
from .measure import WeightFunction

_GAUSS_NODES, _GAUSS_WEIGHTS = np.polynomial.legendre.leggauss(64)


@dataclass(frozen=True)
class TargetClassBounds:
    fmin: float = 0.0
    fmax: float = 1.0

    def __post_init__(self):
        if not (0.0 <= self.fmin < self.fmax < math.inf):
            raise CurveError(f"need 0 <= fmin < fmax < inf, got ({self.fmin}, {self.fmax})")

    @property
    def span(self) -> float:
        return self.fmax - self.fmin

    def contains(self, f: DemandCurve, tol: float = 1e-12) -> bool:
        lo, hi = f(f.domain.pmax), f(f.domain.pmin)
        return f.is_valid() and lo >= self.fmin - tol and hi <= self.fmax + tol


@dataclass(frozen=True)
class ApproxConfig:
    p_exp: float = 1.0
    grid_size: int = 1000
    solver_tol: float = 1e-9
    max_iters: int = 5000

    def __post_init__(self):
        if self.p_exp < 1:
            raise ValueError("p_exp must be at least 1")
        if self.grid_size < 2:
            raise ValueError("grid_size must be at least 2")
        if self.solver_tol <= 0:
            raise ValueError("solver_tol must be positive")


# -- distance -----------------------------------------------------------------

def _difference_pieces(f: DemandCurve, g: DemandCurve, w: WeightFunction):
    if f.domain != g.domain or f.domain != w.domain:
        raise CurveError("distance needs curves and weight on one price domain")
    bp = np.unique(np.concatenate([f.breakpoints, g.breakpoints, w.breakpoints]))
    mid = 0.5 * (bp[:-1] + bp[1:])
    jf, jg = f._segment_index(mid), g._segment_index(mid)
    da = f.a[jf] - g.a[jg]
    db = f.b[jf] - g.b[jg]
    dm = f.m[jf] - g.m[jg]
    return bp[:-1], bp[1:], da, db, dm


def _sign_changes(u, v, da, db, dm):
    """Roots of ``da/sqrt(p) + db - dm p`` strictly inside ``(u, v)``."""
    if dm == 0.0:
        if db == 0.0 or da == 0.0:
            return []
        roots = [(da / db) ** 2] if -da / db > 0 else []
    elif da == 0.0:
        roots = [db / dm]
    else:
        # multiply by sqrt(p): -dm x^3 + db x + da = 0 with x = sqrt(p)
        xs = np.roots([-dm, 0.0, db, da])
        roots = [float(x.real) ** 2 for x in xs if abs(x.imag) < 1e-12 and x.real > 0]
    return sorted(r for r in roots if u < r < v)


def weighted_lp_power(f: DemandCurve, g: DemandCurve, w: WeightFunction, p_exp: float = 1.0) -> float:
    """``int w |f - g|^p`` over the domain."""
    u, v, da, db, dm = _difference_pieces(f, g, w)
    const = (da == 0.0) & (dm == 0.0)
    total = 0.0
    if np.any(const):
        masses = w.cdf(v[const]) - w.cdf(u[const])
        total += float(np.sum(masses * np.abs(db[const]) ** p_exp))
    smooth = np.flatnonzero(~const)
    lo, hi, idx = [], [], []
    for k in smooth:
        cuts = [u[k], *_sign_changes(u[k], v[k], da[k], db[k], dm[k]), v[k]]
        lo.extend(cuts[:-1])
        hi.extend(cuts[1:])
        idx.extend([k] * (len(cuts) - 1))
    if idx:
        lo, hi, idx = np.array(lo), np.array(hi), np.array(idx)
        half = 0.5 * (hi - lo)
        x = (0.5 * (hi + lo))[:, None] + half[:, None] * _GAUSS_NODES[None, :]
        diff = da[idx][:, None] / np.sqrt(x) + db[idx][:, None] - dm[idx][:, None] * x
        vals = w.density(x) * np.abs(diff) ** p_exp
        total += float(np.sum(half * (vals @ _GAUSS_WEIGHTS)))
    return total


def distance(f: DemandCurve, g: DemandCurve, w: WeightFunction, p_exp: float = 1.0) -> float:
    """Weighted Lp distance ``(int w |f - g|^p)^(1/p)``."""
    if p_exp < 1:
        raise ValueError("p must be at least 1")
    return weighted_lp_power(f, g, w, p_exp) ** (1.0 / p_exp)


# -- constructive approximants ------------------------------------------------

def _interior(f: DemandCurve, ticks) -> np.ndarray:
    ticks = np.asarray(ticks, dtype=float)
    return ticks[(ticks > f.domain.pmin) & (ticks < f.domain.pmax)]


def midpoint_lob_basis(f_or_domain, ticks) -> Basis:
    """The LOB on ``ticks`` plus a tick at pmax, over which midpoint staircases live."""
    domain = getattr(f_or_domain, "domain", f_or_domain)
    ticks = np.asarray(ticks, dtype=float)
    inner = ticks[(ticks > domain.pmin) & (ticks < domain.pmax)]
    return lob_basis(domain, np.append(inner, domain.pmax))


def midpoint_lob_approximant(f: DemandCurve, ticks) -> ConeCoefficients:
    """Staircase at the midpoint of ``f``'s range on each tick interval.

    Coefficients refer to :func:`midpoint_lob_basis` for the same ticks: one
    limit order per interior tick (the level drop there) and the final level on
    the tick at pmax.
    """
    inner = _interior(f, ticks)
    pts = np.concatenate([[f.domain.pmin], inner, [f.domain.pmax]])
    vals = f(pts)
    levels = 0.5 * (vals[:-1] + vals[1:])
    coefs = np.append(levels[:-1] - levels[1:], levels[-1])
    return ConeCoefficients(np.maximum(coefs, 0.0))


def staircase_levels(f: DemandCurve, ticks) -> np.ndarray:
    inner = _interior(f, ticks)
    pts = np.concatenate([[f.domain.pmin], inner, [f.domain.pmax]])
    vals = f(pts)
    return 0.5 * (vals[:-1] + vals[1:])


def univ3_replicant(f: DemandCurve, ticks, include_ones: bool = True) -> ConeCoefficients:
    """Per-interval liquidity matching ``f`` at every tick, plus ``f(pmax)`` on the ones curve."""
    ticks = np.asarray(ticks, dtype=float)
    if len(ticks) < 2 or ticks[0] != f.domain.pmin or ticks[-1] != f.domain.pmax:
        raise CurveError("v3 ticks must run from pmin to pmax")
    if np.any(np.diff(ticks) <= 0):
        raise CurveError("v3 ticks must be strictly increasing")
    vals = f(ticks)
    widths = 1.0 / np.sqrt(ticks[:-1]) - 1.0 / np.sqrt(ticks[1:])
    coefs = np.maximum((vals[:-1] - vals[1:]) / widths, 0.0)
    if include_ones:
        coefs = np.append(coefs, vals[-1])
    return ConeCoefficients(coefs)


def warm_start(f: DemandCurve, basis: Basis) -> ConeCoefficients | None:
    """The matching constructive approximant for built-in bases, if any."""
    if basis.kind == "lob" and basis.ticks[-1] == basis.domain.pmax:
        return midpoint_lob_approximant(f, basis.ticks[:-1])
    if basis.kind == "univ3":
        return univ3_replicant(f, basis.ticks, include_ones=basis.include_ones)
    return None


# -- cone projection ----------------------------------------------------------

def _projected_gradient(H: np.ndarray, b: np.ndarray, x0: np.ndarray, tol: float, max_iters: int,
                        offset: float = 0.0):
    """Minimise ``x'Hx/2 - b'x + offset`` over ``x >= 0``.

    Barzilai-Borwein trial steps with an Armijo backtracking test along the
    projection arc, so the objective decreases monotonically. Stops once an
    iteration improves the objective by less than ``tol`` relative to its
    value, or the projected gradient vanishes. Returns ``(x, converged, iterations)``.
    """
    x = np.maximum(x0, 0.0)
    Hx = H @ x
    grad = Hx - b
    obj = 0.5 * (x @ Hx) - b @ x + offset
    lipschitz = max(float(np.max(np.sum(np.abs(H), axis=1))), 1e-300)
    step = 1.0 / lipschitz
    stop = 1e-14 * max(1.0, math.sqrt(b @ b))
    for it in range(1, max_iters + 1):
        pg = x - np.maximum(x - grad, 0.0)
        if math.sqrt(pg @ pg) <= stop:
            return x, True, it
        while True:
            x_new = np.maximum(x - step * grad, 0.0)
            d = x_new - x
            Hx_new = H @ x_new
            obj_new = 0.5 * (x_new @ Hx_new) - b @ x_new + offset
            if obj_new <= obj + grad @ d + 0.5 / step * (d @ d) or step < 1e-18 / lipschitz:
                break
            step *= 0.5
        grad_new = Hx_new - b
        y = grad_new - grad
        sy = d @ y
        gain = obj - obj_new
        x, grad, obj = x_new, grad_new, obj_new
        step = (d @ d) / sy if sy > 0 else 1.0 / lipschitz
        if gain <= tol * max(abs(obj), 1e-300):
            return x, True, it
    return x, False, max_iters


def _solve_l2(A, y, x0, cfg: ApproxConfig):
    n = len(y)
    H = A.T @ A / n
    b = A.T @ y / n
    x, ok, _ = _projected_gradient(H, b, x0, cfg.solver_tol, cfg.max_iters, offset=0.5 * (y @ y) / n)
    return x, ok


def _solve_l1(A, y, x0, cfg: ApproxConfig):
    """IRLS for mean |Ax - y| over x >= 0, then a projected-subgradient polish.

    Each reweighted least-squares step is solved exactly by Lawson-Hanson NNLS;
    the smoothing parameter shrinks geometrically.
    """
    n = len(y)
    scale = max(1.0, float(np.max(np.abs(y))))
    x = np.maximum(x0, 0.0)
    best_x, best_obj = x, float(np.mean(np.abs(A @ x - y)))
    eta = max(best_obj, 1e-3 * scale)
    prev, converged = best_obj, False
    for _ in range(max(10, min(80, cfg.max_iters // 50))):
        r = A @ x - y
        sw = (r * r + eta * eta) ** -0.25
        x, _ = nnls(A * sw[:, None], y * sw, maxiter=50 * A.shape[1])
        obj = float(np.mean(np.abs(A @ x - y)))
        if obj < best_obj:
            best_x, best_obj = x, obj
        if eta <= 1e-8 * scale and abs(prev - obj) <= math.sqrt(cfg.solver_tol) * max(obj, 1e-300):
            converged = True
            break
        prev = obj
        eta = max(0.1 * eta, 1e-10 * scale)
    if not converged:
        x = best_x.copy()
        col = max(float(np.max(np.linalg.norm(A, axis=0))) / math.sqrt(n), 1e-300)
        for k in range(1, cfg.max_iters // 10 + 1):
            g = A.T @ np.sign(A @ x - y) / n
            x = np.maximum(x - (best_obj / col ** 2) / math.sqrt(k) * g, 0.0)
            obj = float(np.mean(np.abs(A @ x - y)))
            if obj < best_obj:
                best_x, best_obj = x, obj
    return best_x, converged


class BestFit(NamedTuple):
    coefs: ConeCoefficients
    distance: float
    converged: bool
    warm_start_distance: float | None


def discretization_grid(w: WeightFunction, size: int) -> np.ndarray:
    """Cell midpoints (in probability) of ``size`` equal-mass cells of ``w``."""
    return np.asarray(w.quantile((np.arange(size) + 0.5) / size), dtype=float)


def best_in_cone(f: DemandCurve, basis: Basis, w: WeightFunction, cfg: ApproxConfig = ApproxConfig(),
                 start: ConeCoefficients | None = None) -> BestFit:
    """Approximate ``inf_{c >= 0} d(f, sum c_i g_i)``.

    The problem is discretised on an equal-mass grid of ``w``; p = 2 uses
    projected gradient, other p use the p = 1 IRLS solver. The reported
    distance is the exact distance of the returned curve and never exceeds the
    distance of the warm start (``start`` or the built-in approximant).
    """
    if f.domain != basis.domain or f.domain != w.domain:
        raise CurveError("target, basis and weight must share a price domain")
    if start is None:
        start = warm_start(f, basis)
    grid = discretization_grid(w, cfg.grid_size)
    A = basis.design_matrix(grid)
    y = f(grid)
    x0 = np.zeros(len(basis)) if start is None else np.asarray(start.values, dtype=float)
    if len(x0) != len(basis):
        raise CurveError("warm start has the wrong length")
    if cfg.p_exp == 2:
        x, converged = _solve_l2(A, y, x0, cfg)
    else:
        x, converged = _solve_l1(A, y, x0, cfg)
    coefs = ConeCoefficients(x)
    dist = distance(f, synthesize(basis, coefs), w, cfg.p_exp)
    warm_dist = None
    if start is not None:
        warm_dist = distance(f, synthesize(basis, start), w, cfg.p_exp)
        if warm_dist <= dist:
            coefs, dist = start, warm_dist
    return BestFit(coefs, dist, converged, warm_dist)


def best_scalar_fit(f: DemandCurve, g: DemandCurve, w: WeightFunction, p_exp: float = 1.0,
                    tol: float = 1e-12) -> tuple[float, float]:
    """Golden-section search for ``min_{c >= 0} d(f, c g)``; returns ``(c, distance)``."""
    def obj(c):
        return distance(f, g * c, w, p_exp)

    hi = 1.0
    while obj(2 * hi) < obj(hi):
        hi *= 2
    lo, hi = 0.0, 2 * hi
    ratio = (math.sqrt(5) - 1) / 2
    x1, x2 = hi - ratio * (hi - lo), lo + ratio * (hi - lo)
    f1, f2 = obj(x1), obj(x2)
    while hi - lo > tol * max(1.0, hi):
        if f1 <= f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - ratio * (hi - lo)
            f1 = obj(x1)
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + ratio * (hi - lo)
            f2 = obj(x2)
    c = 0.5 * (lo + hi)
    return c, obj(c)


# -- random targets and analytic bounds ---------------------------------------

def monotone_sampler(seed, bounds: TargetClassBounds, K: int, w: WeightFunction) -> DemandCurve:
    """Random step curve from ``fmax`` down to ``fmin`` with ``K`` drops.

    Drop locations are ``w``-quantiles of uniform draws; drop sizes are uniform
    sticks rescaled to sum to ``fmax - fmin``.
    """
    if K < 1:
        raise ValueError("need at least one jump")
    rng = np.random.default_rng(seed)
    locs = np.sort(np.asarray(w.quantile(rng.random(K)), dtype=float).reshape(-1))
    sticks = rng.random(K) + 1e-12
    drops = sticks / sticks.sum() * bounds.span
    levels = bounds.fmax - np.cumsum(drops)
    levels[-1] = bounds.fmin
    levels = np.maximum(levels, bounds.fmin)
    return step_curve(w.domain, locs, np.concatenate([[bounds.fmax], levels]))


def lob_epsilon_bound(epsilon: float, bounds: TargetClassBounds) -> float:
    return epsilon * bounds.span / 2


def lob_error_bound(n: int, p_exp: float, bounds: TargetClassBounds) -> float:
    """Midpoint-staircase guarantee on ``n`` equal-mass intervals."""
    return bounds.span / (2 * n ** (1.0 / p_exp))


def v3_epsilon_bound(epsilon: float, bounds: TargetClassBounds, C: float = 1.0) -> float:
    return C * epsilon * bounds.span


def approx_report(f: DemandCurve, basis: Basis, w: WeightFunction, cfg: ApproxConfig) -> dict:
    fit = best_in_cone(f, basis, w, cfg)
    return {
        "mechanism": basis.kind,
        "p": cfg.p_exp,
        "weight": w.kind,
        "coeffs": fit.coefs.tolist(),
        "distance": fit.distance,
        "bound": fit.warm_start_distance,
        "converged": bool(fit.converged),
    }

