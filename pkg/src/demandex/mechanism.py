"""Basis families of exchange mechanisms and tick placement.

A mechanism is the cone of nonnegative combinations of its basis curves; its
exchange complexity is taken to be the number of stored basis curves.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .curves import (
    CurveError,
    DemandCurve,
    PriceDomain,
    combine,
    constant_curve,
    inv_sqrt_curve,
    zero_curve,
)
from .measure import WeightFunction

UNISWAP_TICK_BASE = 1.0001


@dataclass(frozen=True)
class Basis:
    curves: tuple
    kind: str = "custom"
    ticks: tuple | None = None
    include_ones: bool = False

    def __post_init__(self):
        curves = tuple(self.curves)
        if not curves:
            raise CurveError("a basis needs at least one curve")
        domain = curves[0].domain
        for g in curves:
            if g.domain != domain:
                raise CurveError("basis curves must share one price domain")
        object.__setattr__(self, "curves", curves)
        if self.ticks is not None:
            object.__setattr__(self, "ticks", tuple(float(t) for t in self.ticks))

    @property
    def domain(self) -> PriceDomain:
        return self.curves[0].domain

    @property
    def complexity(self) -> int:
        return len(self.curves)

    def __len__(self):
        return len(self.curves)

    def __iter__(self):
        return iter(self.curves)

    def __getitem__(self, i):
        return self.curves[i]

    def design_matrix(self, prices) -> np.ndarray:
        """Basis values at ``prices``, one column per curve."""
        prices = np.asarray(prices, dtype=float)
        return np.column_stack([g(prices) for g in self.curves])

    def to_json(self) -> dict:
        out = {"kind": self.kind, "domain": self.domain.to_json()}
        if self.kind in ("lob", "univ3"):
            out["ticks"] = list(self.ticks)
        if self.kind == "univ3":
            out["include_ones"] = self.include_ones
        if self.kind == "custom":
            out["curves"] = [g.to_json() for g in self.curves]
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "Basis":
        try:
            kind = obj["kind"]
            domain = PriceDomain.from_json(obj["domain"])
            if kind == "cpmm":
                return cpmm_basis(domain)
            if kind == "lob":
                return lob_basis(domain, obj["ticks"])
            if kind == "univ3":
                return univ3_basis(domain, obj["ticks"], include_ones=obj.get("include_ones", True))
            if kind == "custom":
                curves = [DemandCurve.from_json(c) for c in obj["curves"]]
                for g in curves:
                    if g.domain != domain:
                        raise CurveError("custom curve domain differs from mechanism domain")
                return cls(tuple(curves), kind="custom")
        except (KeyError, TypeError) as exc:
            raise CurveError(f"malformed mechanism JSON: {exc}") from exc
        raise CurveError(f"unknown mechanism kind {kind!r}")


@dataclass(frozen=True)
class ConeCoefficients:
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        vals = np.array(self.values, dtype=float).reshape(-1)
        if np.any(~np.isfinite(vals)):
            raise CurveError("coefficients must be finite")
        if np.any(vals < 0):
            raise CurveError("cone coefficients must be nonnegative")
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)

    def __len__(self):
        return len(self.values)

    def __iter__(self):
        return iter(self.values.tolist())

    def __getitem__(self, i):
        return self.values[i]

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)

    def __repr__(self):
        return f"ConeCoefficients({self.values.tolist()})"

    def tolist(self) -> list:
        return self.values.tolist()


def synthesize(basis: Basis, coefs) -> DemandCurve:
    """The cone element ``sum_i c_i g_i``."""
    if not isinstance(coefs, ConeCoefficients):
        coefs = ConeCoefficients(coefs)
    if len(coefs) != len(basis):
        raise CurveError(f"got {len(coefs)} coefficients for a basis of size {len(basis)}")
    if not np.any(coefs.values):
        return zero_curve(basis.domain)
    return combine(basis.curves, coefs.values)


def cpmm_basis(domain: PriceDomain) -> Basis:
    return Basis((inv_sqrt_curve(domain, 1.0),), kind="cpmm")


def _check_sorted(ticks: np.ndarray) -> None:
    if np.any(np.diff(ticks) <= 0):
        raise CurveError("ticks must be strictly increasing")


def lob_basis(domain: PriceDomain, ticks: Sequence[float]) -> Basis:
    """One unit limit-order step per tick: 1 below the tick, 0 from the tick on.

    A tick at ``pmax`` itself is allowed; it is never crossed inside the domain
    and acts as the all-ones curve.
    """
    ticks = np.asarray(ticks, dtype=float)
    if len(ticks) == 0:
        raise CurveError("a limit order book needs at least one tick")
    _check_sorted(ticks)
    if ticks[0] <= domain.pmin or ticks[-1] > domain.pmax:
        raise CurveError("LOB ticks must lie in (pmin, pmax]")
    curves = []
    for t in ticks:
        if t == domain.pmax:
            curves.append(constant_curve(domain, 1.0))
        else:
            curves.append(DemandCurve(domain, [domain.pmin, t, domain.pmax], [0.0, 0.0], [1.0, 0.0]))
    return Basis(tuple(curves), kind="lob", ticks=tuple(ticks))


def univ3_interval_curve(domain: PriceDomain, lo: float, hi: float) -> DemandCurve:
    """Concentrated-liquidity position on ``[lo, hi]`` with unit liquidity."""
    top = 1.0 / math.sqrt(lo) - 1.0 / math.sqrt(hi)
    bp, a, b = [domain.pmin], [], []
    if lo > domain.pmin:
        bp.append(lo)
        a.append(0.0)
        b.append(top)
    bp.append(hi)
    a.append(1.0)
    b.append(-1.0 / math.sqrt(hi))
    if hi < domain.pmax:
        bp.append(domain.pmax)
        a.append(0.0)
        b.append(0.0)
    return DemandCurve(domain, bp, a, b)


def univ3_basis(domain: PriceDomain, ticks: Sequence[float], include_ones: bool = True) -> Basis:
    ticks = np.asarray(ticks, dtype=float)
    if len(ticks) < 2:
        raise CurveError("need at least two ticks")
    _check_sorted(ticks)
    if ticks[0] != domain.pmin or ticks[-1] != domain.pmax:
        raise CurveError("v3 ticks must start at pmin and end at pmax")
    curves = [univ3_interval_curve(domain, lo, hi) for lo, hi in zip(ticks[:-1], ticks[1:])]
    if include_ones:
        curves.append(constant_curve(domain, 1.0))
    return Basis(tuple(curves), kind="univ3", ticks=tuple(ticks), include_ones=include_ones)


def equal_measure_ticks(w: WeightFunction, n: int) -> np.ndarray:
    """Interior points splitting the domain into ``n`` intervals of mass ``1/n``."""
    if n < 1:
        raise CurveError("need at least one interval")
    return np.asarray(w.quantile(np.arange(1, n) / n), dtype=float).reshape(-1)


def equal_measure_lob(w: WeightFunction, n: int) -> Basis:
    """LOB with complexity ``n``: the ``n - 1`` interior quantiles plus a tick at pmax."""
    ticks = np.append(equal_measure_ticks(w, n), w.domain.pmax)
    return lob_basis(w.domain, ticks)


def ratio_ticks(domain: PriceDomain, growth: float) -> np.ndarray:
    """Ticks ``pmin * growth**i`` covering the domain, last one clamped to pmax."""
    if growth <= 1.0:
        raise CurveError("tick growth factor must exceed 1")
    step = math.log(growth)
    n = math.ceil(domain.log_ratio / step * (1 - 1e-12))
    if n < 1:
        raise CurveError("tick spacing yields no interval")
    ticks = domain.pmin * np.exp(step * np.arange(n + 1))
    ticks[0] = domain.pmin
    ticks[-1] = domain.pmax
    return ticks


def geometric_ticks(domain: PriceDomain, epsilon: float, p_exp: float = 1.0) -> np.ndarray:
    """Ticks with ``log(1 + delta) = epsilon**p * log(pmax / pmin)``, endpoints included."""
    if epsilon <= 0 or p_exp < 1:
        raise CurveError("need epsilon > 0 and p >= 1")
    if epsilon ** p_exp > 1:
        raise CurveError("epsilon**p must not exceed 1")
    return ratio_ticks(domain, math.exp(epsilon ** p_exp * domain.log_ratio))


def geometric_tick_count(domain: PriceDomain, epsilon: float, p_exp: float = 1.0) -> int:
    return len(geometric_ticks(domain, epsilon, p_exp)) - 1


def uniswap_tick_count(domain: PriceDomain, base: float = UNISWAP_TICK_BASE) -> float:
    """Number of ``base**i`` ticks spanning the domain (not rounded)."""
    return domain.log_ratio / math.log(base)
