"""Hard target curves for low-complexity mechanisms and worst-case error estimates.

Grids here follow one-based indexing ``t_1 < t_2 < ... < t_{2n+5}`` over
``2(n + 2)`` intervals, so ``grid[i - 1]`` is ``t_i``. For ``l = 1..n`` the
"odd" interval ``[t_{2l+1}, t_{2l+3}]`` has midpoint ``t_{2l+2}``, where the
``l``-th adversarial step drops from ``fmax`` to ``fmin``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .approx import ApproxConfig, TargetClassBounds, best_in_cone, monotone_sampler
from .curves import DemandCurve, step_curve
from .mechanism import Basis, synthesize
from .measure import WeightFunction


def adversary_grid(w: WeightFunction, n: int) -> np.ndarray:
    """The ``2n + 5`` points cutting the domain into ``2(n + 2)`` equal-mass intervals."""
    if n < 1:
        raise ValueError("n must be at least 1")
    m = 2 * (n + 2)
    return np.asarray(w.quantile(np.arange(m + 1) / m), dtype=float)


def _t(grid: Sequence[float], i: int) -> float:
    return float(grid[i - 1])


def adversarial_step_family(w: WeightFunction, n: int, bounds: TargetClassBounds) -> list[DemandCurve]:
    """Steps from ``fmax`` to ``fmin`` at ``t_{2l+2}`` for ``l = 1..n``."""
    grid = adversary_grid(w, n)
    return [step_curve(w.domain, [_t(grid, 2 * l + 2)], [bounds.fmax, bounds.fmin]) for l in range(1, n + 1)]


def large_drop_intervals(g: DemandCurve, grid: Sequence[float]) -> list[int]:
    """Indices ``l`` whose odd interval carries more than half of ``g``'s inner drop.

    The inner drop is ``g(t_3) - g(t_{2n+3})``; a non-increasing ``g`` can have
    at most one such interval.
    """
    n = (len(grid) - 5) // 2
    if len(grid) != 2 * n + 5 or n < 1:
        raise ValueError("grid must have 2n + 5 points for some n >= 1")
    half = (g(_t(grid, 3)) - g(_t(grid, 2 * n + 3))) / 2
    vals = g(np.asarray(grid, dtype=float))
    return [l for l in range(1, n + 1) if vals[2 * l] - vals[2 * l + 2] > half]


def pigeonhole_index(basis: Basis, grid: Sequence[float]) -> int | None:
    """Smallest ``l`` on which no basis curve has a large drop, if any."""
    n = (len(grid) - 5) // 2
    taken = set()
    for g in basis:
        taken.update(large_drop_intervals(g, grid))
    free = [l for l in range(1, n + 1) if l not in taken]
    return free[0] if free else None


def small_jump_gap(g: DemandCurve, grid: Sequence[float], l: int) -> float:
    """``(g(t_{2l+1}) - g(t_{2l+3})) - (g(t_3) - g(t_{2n+3})) / 2``; nonpositive on a free interval."""
    n = (len(grid) - 5) // 2
    drop = g(_t(grid, 2 * l + 1)) - g(_t(grid, 2 * l + 3))
    return drop - (g(_t(grid, 3)) - g(_t(grid, 2 * n + 3))) / 2


# Denominator constants per case of the lower-bound argument, as functions of p.
CASE_CONSTANTS = {
    "left_overshoot": lambda p: 4.0 ** p,
    "right_undershoot": lambda p: 4.0 ** p,
    "high_plateau": lambda p: 2.0 ** (1 + 2 * p),
    "low_plateau": lambda p: 2.0 ** (1 + 2 * p),
    "interior": lambda p: 8.0 ** p,
}


def case_bound(case: str, n: int, p_exp: float, bounds: TargetClassBounds) -> float:
    """Distance lower bound ``(span^p / ((n + 2) K_case(p)))^(1/p)``."""
    return (bounds.span ** p_exp / ((n + 2) * CASE_CONSTANTS[case](p_exp))) ** (1.0 / p_exp)


def lower_bound_floor(n: int, p_exp: float, bounds: TargetClassBounds) -> float:
    """Smallest case bound, ``span / 8 * (1 / (n + 2))^(1/p)`` for p >= 1."""
    return min(case_bound(c, n, p_exp, bounds) for c in CASE_CONSTANTS)


def classify_case(g: DemandCurve, grid: Sequence[float], l: int, bounds: TargetClassBounds) -> str:
    """Which branch of the lower-bound case analysis applies to ``g``."""
    n = (len(grid) - 5) // 2
    quarter = bounds.span / 4
    if g(_t(grid, 3)) >= bounds.fmax + quarter:
        return "left_overshoot"
    if g(_t(grid, 2 * n + 3)) <= bounds.fmin - quarter:
        return "right_undershoot"
    if g(_t(grid, 2 * l + 1)) >= bounds.fmax:
        return "high_plateau"
    if g(_t(grid, 2 * l + 3)) <= bounds.fmin:
        return "low_plateau"
    return "interior"


@dataclass
class LowerBoundReport:
    mechanism: str
    complexity: int
    n: int
    p: float
    distances: list = field(default_factory=list)
    max_distance: float = 0.0
    worst_index: int = 0
    pigeonhole_index: int | None = None
    pigeonhole_distance: float | None = None
    case: str | None = None
    case_bound: float | None = None
    floor: float = 0.0
    absorbed: bool = False

    def to_json(self) -> dict:
        return {
            "mechanism": self.mechanism, "complexity": self.complexity, "n": self.n, "p": self.p,
            "max_distance": self.max_distance, "worst_index": self.worst_index,
            "pigeonhole_index": self.pigeonhole_index, "pigeonhole_distance": self.pigeonhole_distance,
            "case": self.case, "case_bound": self.case_bound, "floor": self.floor,
            "absorbed": self.absorbed, "distances": self.distances,
        }


def lower_bound_run(basis: Basis, w: WeightFunction, bounds: TargetClassBounds, cfg: ApproxConfig,
                    n: int | None = None, absorb_tol: float = 1e-9) -> LowerBoundReport:
    """Fit every adversarial step and locate the pigeonhole interval and its case."""
    n = len(basis) + 1 if n is None else n
    grid = adversary_grid(w, n)
    family = adversarial_step_family(w, n, bounds)
    fits = [best_in_cone(f, basis, w, cfg) for f in family]
    dists = [fit.distance for fit in fits]
    worst = int(np.argmax(dists))
    report = LowerBoundReport(basis.kind, len(basis), n, cfg.p_exp, dists, dists[worst], worst + 1,
                              floor=lower_bound_floor(n, cfg.p_exp, bounds))
    report.absorbed = report.max_distance <= absorb_tol * bounds.span
    l = pigeonhole_index(basis, grid)
    if l is not None:
        fit = fits[l - 1]
        g = synthesize(basis, fit.coefs)
        report.pigeonhole_index = l
        report.pigeonhole_distance = fit.distance
        report.case = classify_case(g, grid, l, bounds)
        report.case_bound = case_bound(report.case, n, cfg.p_exp, bounds)
    return report


@dataclass(frozen=True)
class ErrorEstimate:
    value: float
    worst_label: str
    num_targets: int
    all_converged: bool


def err_estimate(basis: Basis, w: WeightFunction, bounds: TargetClassBounds, cfg: ApproxConfig,
                 sampler_seed: int = 0, n_random: int = 32, jumps: int = 8) -> ErrorEstimate:
    """Lower estimate of the worst-case approximation error of ``basis``.

    The supremum is taken over a finite pool: the adversarial steps for
    ``n = len(basis) + 1`` plus ``n_random`` sampled monotone curves.
    """
    targets = [(f"adversary_{l + 1}", f)
               for l, f in enumerate(adversarial_step_family(w, len(basis) + 1, bounds))]
    seeds = np.random.SeedSequence(sampler_seed).spawn(n_random)
    targets += [(f"random_{i}", monotone_sampler(s, bounds, jumps, w)) for i, s in enumerate(seeds)]
    best, label, ok = -math.inf, "", True
    for name, f in targets:
        fit = best_in_cone(f, basis, w, cfg)
        ok = ok and fit.converged
        if fit.distance > best:
            best, label = fit.distance, name
    return ErrorEstimate(best, label, len(targets), ok)
