"""Normalised weight functions on a price domain."""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .curves import CurveError, PriceDomain


class WeightFunction:
    """A probability density on ``[pmin, pmax]``.

    Three kinds are supported: ``"uniform"``, ``"log_uniform"`` (density
    ``1 / (p log(pmax / pmin))``) and ``"piecewise"`` (piecewise-constant density,
    normalised on construction).
    """

    def __init__(self, kind: str, domain: PriceDomain, breakpoints=None, densities=None):
        self.kind = kind
        self.domain = domain
        if kind in ("uniform", "log_uniform"):
            self.breakpoints = np.array([domain.pmin, domain.pmax])
            self.densities = None
        elif kind == "piecewise":
            bp = np.asarray(breakpoints, dtype=float)
            dens = np.asarray(densities, dtype=float)
            if len(bp) != len(dens) + 1 or len(dens) == 0:
                raise CurveError("piecewise weight needs len(breakpoints) == len(densities) + 1")
            if bp[0] != domain.pmin or bp[-1] != domain.pmax or np.any(np.diff(bp) <= 0):
                raise CurveError("weight breakpoints must increase from pmin to pmax")
            if np.any(dens < 0):
                raise CurveError("densities must be nonnegative")
            total = float(np.sum(dens * np.diff(bp)))
            if total <= 0:
                raise CurveError("weight has zero total mass")
            self.breakpoints = bp
            self.densities = dens / total
            self._cdf = np.concatenate([[0.0], np.cumsum(self.densities * np.diff(bp))])
            self._cdf[-1] = 1.0
        else:
            raise CurveError(f"unknown weight kind {kind!r}")

    @classmethod
    def uniform(cls, domain: PriceDomain) -> "WeightFunction":
        return cls("uniform", domain)

    @classmethod
    def log_uniform(cls, domain: PriceDomain) -> "WeightFunction":
        return cls("log_uniform", domain)

    @classmethod
    def piecewise(cls, breakpoints: Sequence[float], densities: Sequence[float]) -> "WeightFunction":
        domain = PriceDomain(breakpoints[0], breakpoints[-1])
        return cls("piecewise", domain, breakpoints, densities)

    @property
    def is_piecewise_constant(self) -> bool:
        return self.kind != "log_uniform"

    def __repr__(self):
        return f"WeightFunction({self.kind!r}, [{self.domain.pmin}, {self.domain.pmax}])"

    def density(self, p):
        x = np.asarray(p, dtype=float)
        pmin, pmax = self.domain.pmin, self.domain.pmax
        inside = (x >= pmin) & (x <= pmax)
        if self.kind == "uniform":
            out = np.where(inside, 1.0 / (pmax - pmin), 0.0)
        elif self.kind == "log_uniform":
            out = np.where(inside, 1.0 / (x * self.domain.log_ratio), 0.0)
        else:
            j = np.clip(np.searchsorted(self.breakpoints, x, side="right") - 1, 0, len(self.densities) - 1)
            out = np.where(inside, self.densities[j], 0.0)
        return float(out) if out.ndim == 0 else out

    def cdf(self, p):
        """Mass of ``[pmin, p]``, clipped to the domain."""
        x = np.clip(np.asarray(p, dtype=float), self.domain.pmin, self.domain.pmax)
        pmin, pmax = self.domain.pmin, self.domain.pmax
        if self.kind == "uniform":
            out = (x - pmin) / (pmax - pmin)
        elif self.kind == "log_uniform":
            out = np.log(x / pmin) / self.domain.log_ratio
        else:
            j = np.clip(np.searchsorted(self.breakpoints, x, side="right") - 1, 0, len(self.densities) - 1)
            out = self._cdf[j] + self.densities[j] * (x - self.breakpoints[j])
        out = np.clip(out, 0.0, 1.0)
        return float(out) if out.ndim == 0 else out

    def mass(self, lo: float, hi: float) -> float:
        """Weight of ``[lo, hi]``; bounds must lie inside the domain."""
        pmin, pmax = self.domain.pmin, self.domain.pmax
        slack = 1e-12 * pmax
        if not (pmin - slack <= lo <= hi + slack and hi <= pmax + slack):
            raise CurveError(f"mass bounds [{lo}, {hi}] not inside [{pmin}, {pmax}]")
        if hi <= lo:
            return 0.0
        if self.kind == "uniform":
            return (min(hi, pmax) - max(lo, pmin)) / (pmax - pmin)
        if self.kind == "log_uniform":
            return math.log(min(hi, pmax) / max(lo, pmin)) / self.domain.log_ratio
        return float(self.cdf(hi) - self.cdf(lo))

    def quantile(self, q):
        """Leftmost price whose cumulative mass reaches ``q``."""
        qa = np.asarray(q, dtype=float)
        if np.any((qa < 0) | (qa > 1)) or np.any(np.isnan(qa)):
            raise CurveError("quantile level must lie in [0, 1]")
        pmin, pmax = self.domain.pmin, self.domain.pmax
        if self.kind == "uniform":
            out = pmin + qa * (pmax - pmin)
        elif self.kind == "log_uniform":
            out = pmin * np.exp(qa * self.domain.log_ratio)
        else:
            i = np.clip(np.searchsorted(self._cdf, qa, side="left"), 1, len(self.densities))
            dens = self.densities[i - 1]
            safe = np.where(dens > 0, dens, 1.0)
            out = np.where(dens > 0, self.breakpoints[i - 1] + (qa - self._cdf[i - 1]) / safe,
                           self.breakpoints[i - 1])
        out = np.clip(out, pmin, pmax)
        if out.ndim == 0:
            return float(out)
        return out

    def max_interval_mass(self, ticks: Sequence[float]) -> float:
        ticks = np.asarray(ticks, dtype=float)
        masses = np.diff(self.cdf(ticks))
        return float(np.max(masses))

    def interval_constant(self, ticks: Sequence[float], p_exp: float = 1.0) -> float:
        """Smallest ``C`` with every tick interval of mass at most ``C**p / n``."""
        n = len(ticks) - 1
        return (n * self.max_interval_mass(ticks)) ** (1.0 / p_exp)

    def satisfies_mass_bound(self, ticks: Sequence[float], C: float, p_exp: float = 1.0) -> bool:
        n = len(ticks) - 1
        return self.max_interval_mass(ticks) <= C ** p_exp / n * (1 + 1e-12)

    # -- serialisation ------------------------------------------------------

    def to_json(self) -> dict:
        if self.kind == "piecewise":
            return {"kind": "piecewise", "breakpoints": self.breakpoints.tolist(),
                    "densities": self.densities.tolist()}
        return {"kind": self.kind, "domain": self.domain.to_json()}

    @classmethod
    def from_json(cls, obj: dict) -> "WeightFunction":
        try:
            kind = obj["kind"]
            if kind == "piecewise":
                return cls.piecewise(obj["breakpoints"], obj["densities"])
            return cls(kind, PriceDomain.from_json(obj["domain"]))
        except (KeyError, TypeError, IndexError) as exc:
            raise CurveError(f"malformed weight JSON: {obj!r}") from exc


def mass(w: WeightFunction, lo: float, hi: float) -> float:
    return w.mass(lo, hi)


def quantile(w: WeightFunction, q: float) -> float:
    return w.quantile(q)
