"""Piecewise demand curves over a bounded price domain.

Every segment has the closed form ``a / sqrt(p) + b - m * p`` with ``a, m >= 0``,
which covers constants (``a = m = 0``), CPMM-style pieces (``m = 0``) and linear
pieces (``a = 0``), and is closed under addition and nonnegative scaling.

Curves are right-continuous at breakpoints: the value at an interior breakpoint
``t_j`` is the value of the segment starting there, while the left limit comes
from the segment ending there. Outside ``[pmin, pmax]`` a curve is extended by
its boundary values, so it carries no price mass there.
"""

from __future__ import annotations

import math
from bisect import bisect_left, bisect_right
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import brentq


class CurveError(ValueError):
    """Raised for invalid curves or out-of-range curve queries."""


@dataclass(frozen=True)
class PriceDomain:
    pmin: float
    pmax: float

    def __post_init__(self):
        pmin, pmax = float(self.pmin), float(self.pmax)
        if not (0.0 < pmin < pmax < math.inf):
            raise CurveError(f"need 0 < pmin < pmax < inf, got [{pmin}, {pmax}]")
        object.__setattr__(self, "pmin", pmin)
        object.__setattr__(self, "pmax", pmax)

    @property
    def log_ratio(self) -> float:
        return math.log(self.pmax / self.pmin)

    def contains(self, p: float, rel_tol: float = 0.0) -> bool:
        slack = rel_tol * self.pmax
        return self.pmin - slack <= p <= self.pmax + slack

    def to_json(self) -> dict:
        return {"pmin": self.pmin, "pmax": self.pmax}

    @classmethod
    def from_json(cls, obj: dict) -> "PriceDomain":
        try:
            return cls(float(obj["pmin"]), float(obj["pmax"]))
        except (KeyError, TypeError) as exc:
            raise CurveError(f"malformed domain: {obj!r}") from exc


def _segment_values(a, b, m, p):
    return a / np.sqrt(p) + b - m * p


def _segment_integral(a, m, u, v):
    # -int_u^v p d(a/sqrt(p) + b - m p)
    return a * (np.sqrt(v) - np.sqrt(u)) + 0.5 * m * (v * v - u * u)


class DemandCurve:
    """Non-increasing, nonnegative piecewise curve ``g(p)``.

    ``breakpoints`` has length ``k + 1`` and the coefficient arrays length ``k``;
    segment ``j`` lives on ``[breakpoints[j], breakpoints[j + 1]]``.
    """

    def __init__(self, domain: PriceDomain, breakpoints, a, b, m=None, *, validate: bool = True):
        bp = np.array(breakpoints, dtype=float)
        a = np.array(a, dtype=float)
        b = np.array(b, dtype=float)
        m = np.zeros_like(a) if m is None else np.array(m, dtype=float)
        if bp.ndim != 1 or len(bp) < 2 or not (a.shape == b.shape == m.shape == (len(bp) - 1,)):
            raise CurveError("breakpoints must have one more entry than each coefficient array")
        if bp[0] != domain.pmin or bp[-1] != domain.pmax:
            raise CurveError("breakpoints must start at pmin and end at pmax")
        if np.any(np.diff(bp) <= 0):
            raise CurveError("breakpoints must be strictly increasing")
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b)) and np.all(np.isfinite(m))):
            raise CurveError("segment coefficients must be finite")
        for arr in (bp, a, b, m):
            arr.flags.writeable = False
        self.domain = domain
        self.breakpoints = bp
        self.a = a
        self.b = b
        self.m = m
        if validate:
            self.check()

    # -- validity -----------------------------------------------------------

    @property
    def num_segments(self) -> int:
        return len(self.a)

    @cached_property
    def _start_values(self) -> np.ndarray:
        return _segment_values(self.a, self.b, self.m, self.breakpoints[:-1])

    @cached_property
    def _end_values(self) -> np.ndarray:
        return _segment_values(self.a, self.b, self.m, self.breakpoints[1:])

    @cached_property
    def scale(self) -> float:
        return float(max(1.0, np.max(np.abs(self._start_values)), np.max(np.abs(self._end_values))))

    def check(self, tol: float = 1e-12) -> None:
        """Raise :class:`CurveError` unless the curve is nonnegative and non-increasing."""
        eps = tol * self.scale
        if np.any(self.a < -eps) or np.any(self.m < -eps):
            raise CurveError("segment is increasing somewhere (negative a or m)")
        if np.any(self._end_values < -eps):
            raise CurveError("curve takes negative values")
        if np.any(self._end_values[:-1] < self._start_values[1:] - eps):
            raise CurveError("curve jumps upward at a breakpoint")

    def is_valid(self, tol: float = 1e-12) -> bool:
        try:
            self.check(tol)
        except CurveError:
            return False
        return True

    # -- evaluation ---------------------------------------------------------

    @cached_property
    def _lists(self):
        return self.breakpoints.tolist(), self.a.tolist(), self.b.tolist(), self.m.tolist()

    def _segment_index(self, p, side: str = "right"):
        if isinstance(p, float):
            bp = self._lists[0]
            i = (bisect_right if side == "right" else bisect_left)(bp, p) - 1
            return min(max(i, 0), len(bp) - 2)
        idx = np.searchsorted(self.breakpoints, p, side=side) - 1
        return np.clip(idx, 0, self.num_segments - 1)

    def _scalar_value(self, p: float, side: str) -> float:
        if not p > 0:
            raise CurveError("prices must be positive")
        x = min(max(p, self.domain.pmin), self.domain.pmax)
        j = self._segment_index(x, side)
        _, a, b, m = self._lists
        return a[j] / math.sqrt(x) + b[j] - m[j] * x

    def __call__(self, p):
        """Right-continuous value at ``p`` (scalar or array)."""
        if isinstance(p, (float, int)):
            return self._scalar_value(float(p), "right")
        arr = np.asarray(p, dtype=float)
        if np.any(arr <= 0):
            raise CurveError("prices must be positive")
        x = np.clip(arr, self.domain.pmin, self.domain.pmax)
        j = self._segment_index(x)
        out = _segment_values(self.a[j], self.b[j], self.m[j], x)
        return float(out) if out.ndim == 0 else out

    def left_limit(self, p):
        """Value approached from the left; differs from ``g(p)`` only at jumps."""
        if isinstance(p, (float, int)):
            return self._scalar_value(float(p), "left")
        arr = np.asarray(p, dtype=float)
        if np.any(arr <= 0):
            raise CurveError("prices must be positive")
        x = np.clip(arr, self.domain.pmin, self.domain.pmax)
        j = self._segment_index(x, side="left")
        out = _segment_values(self.a[j], self.b[j], self.m[j], x)
        return float(out) if out.ndim == 0 else out

    def derivative(self, p):
        """Derivative of the smooth part (zero outside the domain)."""
        arr = np.asarray(p, dtype=float)
        j = self._segment_index(arr)
        out = -0.5 * self.a[j] * arr ** -1.5 - self.m[j]
        inside = (arr >= self.domain.pmin) & (arr <= self.domain.pmax)
        out = np.where(inside, out, 0.0)
        return float(out) if out.ndim == 0 else out

    @cached_property
    def jumps(self) -> np.ndarray:
        """Downward jump sizes at the interior breakpoints ``breakpoints[1:-1]``."""
        return self._end_values[:-1] - self._start_values[1:]

    @property
    def interior_breakpoints(self) -> np.ndarray:
        return self.breakpoints[1:-1]

    @cached_property
    def _full_segment_integrals(self) -> np.ndarray:
        return _segment_integral(self.a, self.m, self.breakpoints[:-1], self.breakpoints[1:])

    @cached_property
    def _cumulative(self) -> np.ndarray:
        # integral from pmin up to and including the jump at breakpoints[j]
        out = np.zeros(self.num_segments)
        acc = 0.0
        for j in range(1, self.num_segments):
            acc += self._full_segment_integrals[j - 1]
            acc += self.breakpoints[j] * self.jumps[j - 1]
            out[j] = acc
        return out

    def price_integral(self, lo: float, hi: float) -> float:
        """``-int_lo^hi p dg(p)``; jumps in ``(lo, hi]`` count, ``lo > hi`` flips sign."""
        if lo <= 0 or hi <= 0:
            raise CurveError("integration bounds must be positive")
        if lo == hi:
            return 0.0
        if lo > hi:
            return -self.price_integral(hi, lo)
        u = min(max(lo, self.domain.pmin), self.domain.pmax)
        v = min(max(hi, self.domain.pmin), self.domain.pmax)
        if u == v:
            return 0.0
        ju = int(self._segment_index(u))
        jv = int(self._segment_index(v))
        a, m, bp = self.a, self.m, self.breakpoints
        if ju == jv:
            return float(_segment_integral(a[ju], m[ju], u, v))
        terms = [
            _segment_integral(a[ju], m[ju], u, bp[ju + 1]),
            _segment_integral(a[jv], m[jv], bp[jv], v),
        ]
        terms.extend(self._full_segment_integrals[ju + 1 : jv])
        terms.extend(bp[ju + 1 : jv + 1] * self.jumps[ju : jv])
        return math.fsum(float(t) for t in terms)

    def cumulative_price_integral(self, p):
        """Vectorised ``-int_pmin^p q dg(q)``."""
        arr = np.asarray(p, dtype=float)
        x = np.clip(arr, self.domain.pmin, self.domain.pmax)
        j = self._segment_index(x)
        out = self._cumulative[j] + _segment_integral(self.a[j], self.m[j], self.breakpoints[j], x)
        return float(out) if out.ndim == 0 else out

    def quantity_integral(self, lo: float, hi: float) -> float:
        """Plain ``int_lo^hi g(p) dp`` including the constant extension."""
        if lo > hi:
            return -self.quantity_integral(hi, lo)
        total = 0.0
        pmin, pmax = self.domain.pmin, self.domain.pmax
        if lo < pmin:
            total += self(pmin) * (min(hi, pmin) - lo)
        if hi > pmax:
            total += self(pmax) * (hi - max(lo, pmax))
        u, v = max(lo, pmin), min(hi, pmax)
        bp = self.breakpoints
        for j in range(self.num_segments):
            s, e = max(u, bp[j]), min(v, bp[j + 1])
            if e <= s:
                continue
            total += (2 * self.a[j] * (math.sqrt(e) - math.sqrt(s)) + self.b[j] * (e - s)
                      - 0.5 * self.m[j] * (e * e - s * s))
        return total

    def invert(self, q: float, tol: float = 1e-12) -> float:
        """Leftmost price ``p`` with ``g(p) <= q``.

        This is the leftmost solution of ``g(p) = q`` when one exists, and the
        location of the jump that skips over ``q`` otherwise.
        """
        lo_val, hi_val = self(self.domain.pmax), self(self.domain.pmin)
        eps = tol * self.scale
        if not (lo_val - eps <= q <= hi_val + eps):
            raise CurveError(f"quantity {q} outside reachable range [{lo_val}, {hi_val}]")
        bp = self.breakpoints
        for j in range(self.num_segments):
            if self._start_values[j] <= q:
                return float(bp[j])
            if self._end_values[j] > q:
                continue
            a, b, m = self.a[j], self.b[j], self.m[j]
            if m == 0.0:
                root = (a / (q - b)) ** 2
            elif a == 0.0:
                root = (b - q) / m
            else:
                root = brentq(lambda x: _segment_values(a, b, m, x) - q, bp[j], bp[j + 1],
                              xtol=1e-15, rtol=4 * np.finfo(float).eps)
            return float(min(max(root, bp[j]), bp[j + 1]))
        return self.domain.pmax

    # -- algebra ------------------------------------------------------------

    def __add__(self, other: "DemandCurve") -> "DemandCurve":
        if not isinstance(other, DemandCurve):
            return NotImplemented
        return add(self, other)

    def __mul__(self, c: float) -> "DemandCurve":
        return scale(self, c)

    __rmul__ = __mul__

    def __repr__(self):
        return (f"DemandCurve(domain=[{self.domain.pmin}, {self.domain.pmax}], "
                f"segments={self.num_segments})")

    # -- serialisation ------------------------------------------------------

    def to_json(self) -> dict:
        pieces = []
        bp = self.breakpoints
        for j in range(self.num_segments):
            piece = {"from": float(bp[j]), "to": float(bp[j + 1])}
            a, b, m = float(self.a[j]), float(self.b[j]), float(self.m[j])
            if a == 0.0 and m == 0.0:
                piece.update(kind="constant", c=b)
            elif m == 0.0:
                piece.update(kind="inv_sqrt_affine", a=a, b=b)
            elif a == 0.0:
                piece.update(kind="linear", start=b - m * bp[j], end=b - m * bp[j + 1])
            else:
                piece.update(kind="sqrt_linear", a=a, b=b, m=m)
            pieces.append(piece)
        return {"domain": self.domain.to_json(), "pieces": pieces}

    @classmethod
    def from_json(cls, obj: dict) -> "DemandCurve":
        try:
            domain = PriceDomain.from_json(obj["domain"])
            raw = obj["pieces"]
        except (KeyError, TypeError) as exc:
            raise CurveError("curve JSON needs 'domain' and 'pieces'") from exc
        return from_pieces(domain, raw)


def from_pieces(domain: PriceDomain, pieces: Sequence[dict]) -> DemandCurve:
    """Build a curve from JSON-style piece dicts that tile the domain in order."""
    if not pieces:
        raise CurveError("a curve needs at least one piece")
    bp = [float(pieces[0]["from"])]
    a, b, m = [], [], []
    for piece in pieces:
        try:
            lo, hi, kind = float(piece["from"]), float(piece["to"]), piece["kind"]
            if lo != bp[-1]:
                raise CurveError(f"pieces must be contiguous, gap at {bp[-1]}")
            if kind == "constant":
                coef = (0.0, float(piece["c"]), 0.0)
            elif kind == "inv_sqrt_affine":
                coef = (float(piece["a"]), float(piece["b"]), 0.0)
            elif kind == "linear":
                start, end = float(piece["start"]), float(piece["end"])
                slope = (start - end) / (hi - lo)
                coef = (0.0, start + slope * lo, slope)
            elif kind == "sqrt_linear":
                coef = (float(piece["a"]), float(piece["b"]), float(piece["m"]))
            else:
                raise CurveError(f"unknown piece kind {kind!r}")
        except (KeyError, TypeError) as exc:
            raise CurveError(f"malformed piece {piece!r}") from exc
        bp.append(hi)
        a.append(coef[0])
        b.append(coef[1])
        m.append(coef[2])
    return DemandCurve(domain, bp, a, b, m)


# -- constructors -------------------------------------------------------------

def zero_curve(domain: PriceDomain) -> DemandCurve:
    return DemandCurve(domain, [domain.pmin, domain.pmax], [0.0], [0.0])


def constant_curve(domain: PriceDomain, c: float) -> DemandCurve:
    return DemandCurve(domain, [domain.pmin, domain.pmax], [0.0], [c])


def inv_sqrt_curve(domain: PriceDomain, a: float = 1.0, b: float = 0.0) -> DemandCurve:
    """``a / sqrt(p) + b`` on the whole domain."""
    return DemandCurve(domain, [domain.pmin, domain.pmax], [a], [b])


def linear_curve(domain: PriceDomain, start: float, end: float) -> DemandCurve:
    """Straight line from ``start`` at pmin to ``end`` at pmax."""
    slope = (start - end) / (domain.pmax - domain.pmin)
    return DemandCurve(domain, [domain.pmin, domain.pmax], [0.0], [start + slope * domain.pmin], [slope])


def step_curve(domain: PriceDomain, locations: Iterable[float], levels: Sequence[float]) -> DemandCurve:
    """Piecewise-constant curve with value ``levels[i]`` after the ``i``-th location.

    ``levels`` has one more entry than ``locations``. Locations at or outside the
    domain boundary are folded into the neighbouring level.
    """
    locs = [float(t) for t in locations]
    levels = [float(v) for v in levels]
    if len(levels) != len(locs) + 1:
        raise CurveError("need exactly one more level than step locations")
    if any(t2 < t1 for t1, t2 in zip(locs, locs[1:])):
        raise CurveError("step locations must be sorted")
    bp = [domain.pmin]
    vals = [levels[0]]
    for t, level in zip(locs, levels[1:]):
        if t <= domain.pmin:
            vals[-1] = level
        elif t >= domain.pmax:
            break
        elif t == bp[-1]:
            vals[-1] = level
        else:
            bp.append(t)
            vals.append(level)
    bp.append(domain.pmax)
    return DemandCurve(domain, bp, np.zeros(len(vals)), vals)


# -- functional forms ---------------------------------------------------------

def evaluate(g: DemandCurve, p: float) -> float:
    return g(p)


def combine(curves: Sequence[DemandCurve], weights: Sequence[float] | None = None,
            *, validate: bool = True) -> DemandCurve:
    """Linear combination ``sum_i w_i g_i`` on the union of all breakpoints."""
    if not curves:
        raise CurveError("combine needs at least one curve")
    domain = curves[0].domain
    for g in curves[1:]:
        if g.domain != domain:
            raise CurveError("curves live on different price domains")
    if weights is None:
        weights = np.ones(len(curves))
    weights = np.asarray(weights, dtype=float)
    if len(weights) != len(curves):
        raise CurveError("one weight per curve required")
    bp = np.unique(np.concatenate([g.breakpoints for g in curves]))
    mid = 0.5 * (bp[:-1] + bp[1:])
    a = np.zeros(len(mid))
    b = np.zeros(len(mid))
    m = np.zeros(len(mid))
    for w, g in zip(weights, curves):
        if w == 0.0:
            continue
        # midpoints sit strictly inside the domain, so no clipping is needed
        j = np.searchsorted(g.breakpoints, mid) - 1
        a += w * g.a[j]
        b += w * g.b[j]
        m += w * g.m[j]
    return DemandCurve(domain, bp, a, b, m, validate=validate)


def add(g1: DemandCurve, g2: DemandCurve) -> DemandCurve:
    if g1.domain != g2.domain:
        raise CurveError("cannot add curves on different price domains")
    return combine([g1, g2])


def scale(g: DemandCurve, c: float) -> DemandCurve:
    c = float(c)
    if c < 0 or not math.isfinite(c):
        raise CurveError(f"scale factor must be a finite nonnegative number, got {c}")
    return DemandCurve(g.domain, g.breakpoints, c * g.a, c * g.b, c * g.m, validate=False)


def stieltjes_price_integral(g: DemandCurve, lo: float, hi: float) -> float:
    return g.price_integral(lo, hi)


def invert_quantity(g: DemandCurve, q: float) -> float:
    return g.invert(q)
