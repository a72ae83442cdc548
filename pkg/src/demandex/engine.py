"""Exchange engine over aggregated LP demand curves.

The pool always sits at a price ``p0``. It holds ``g(p0)`` units of the risky
asset and ``-int_pmin^p0 p dg`` units of numeraire, where ``g`` is the sum of the
LP curves. Traders move the price; LPs mint and burn curves. Both reserves are
tracked incrementally and can be re-derived from ``g`` at any time.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Iterable, NamedTuple

import numpy as np

from .curves import CurveError, DemandCurve, PriceDomain, combine, zero_curve
from .mechanism import Basis, synthesize


class EngineError(Exception):
    """Invalid pool operation."""


class SolvencyError(EngineError):
    """The numeraire reserve went negative beyond rounding tolerance."""


class EventError(EngineError):
    """An event in a sequence failed; carries the zero-based event index."""

    def __init__(self, index: int, cause: Exception):
        super().__init__(f"event {index} failed: {cause}")
        self.index = index
        self.cause = cause


SOLVENCY_TOL = 1e-9
CONSISTENCY_TOL = 1e-9


@dataclass(frozen=True)
class LPPosition:
    lp_id: str
    curve: DemandCurve


@dataclass(frozen=True)
class TradeReceipt:
    p_before: float
    p_after: float
    risky_to_trader: float
    numeraire_from_trader: float


class ArbitrageResult(NamedTuple):
    p1: float
    profit: float
    tied: bool


class PoolState:
    """Mutable pool. Not thread-safe; share only under external locking."""

    def __init__(self, domain: PriceDomain, p0: float | None = None, *, check_every_step: bool = True):
        self.domain = domain
        p0 = domain.pmin if p0 is None else float(p0)
        if not domain.contains(p0):
            raise EngineError(f"initial price {p0} outside [{domain.pmin}, {domain.pmax}]")
        self.p0 = p0
        self.positions: dict[str, LPPosition] = {}
        self.aggregate = zero_curve(domain)
        self.risky_reserve = 0.0
        self.numeraire_reserve = 0.0
        self.max_reserve = 0.0
        self.check_every_step = check_every_step

    # -- derived quantities -------------------------------------------------

    def recomputed_reserves(self) -> tuple[float, float]:
        g = self.aggregate
        return g(self.p0), g.price_integral(self.domain.pmin, self.p0)

    @property
    def reserve_scale(self) -> float:
        return max(1.0, self.max_reserve)

    def check_solvency(self) -> None:
        self.max_reserve = max(self.max_reserve, abs(self.numeraire_reserve),
                               abs(self.risky_reserve) * self.p0)
        floor = -SOLVENCY_TOL * self.reserve_scale
        if self.numeraire_reserve < floor:
            raise SolvencyError(f"numeraire reserve {self.numeraire_reserve!r} below {floor!r}")
        if self.risky_reserve < floor:
            raise SolvencyError(f"risky reserve {self.risky_reserve!r} below {floor!r}")

    def check_consistency(self) -> None:
        risky, numeraire = self.recomputed_reserves()
        tol = CONSISTENCY_TOL * self.reserve_scale
        if abs(risky - self.risky_reserve) > tol or abs(numeraire - self.numeraire_reserve) > tol:
            raise EngineError(
                f"ledger drift: incremental ({self.risky_reserve}, {self.numeraire_reserve}) "
                f"vs recomputed ({risky}, {numeraire})")

    def _after_event(self) -> None:
        self.check_solvency()
        if self.check_every_step:
            self.check_consistency()

    # -- LP operations ------------------------------------------------------

    def mint(self, lp_id: str, curve: DemandCurve) -> tuple[float, float]:
        """Add a position; returns the required (risky, numeraire) deposit."""
        if curve.domain != self.domain:
            raise EngineError("curve domain does not match the pool domain")
        if lp_id in self.positions:
            raise EngineError(f"LP {lp_id!r} already holds a position")
        risky = curve(self.p0)
        numeraire = curve.price_integral(self.domain.pmin, self.p0)
        self.positions[lp_id] = LPPosition(lp_id, curve)
        self.aggregate = combine([self.aggregate, curve])
        self.risky_reserve += risky
        self.numeraire_reserve += numeraire
        self._after_event()
        return risky, numeraire

    def burn(self, lp_id: str) -> tuple[float, float]:
        """Remove a position; returns the (risky, numeraire) paid out at the current price."""
        try:
            pos = self.positions.pop(lp_id)
        except KeyError:
            raise EngineError(f"unknown LP {lp_id!r}") from None
        risky = pos.curve(self.p0)
        numeraire = pos.curve.price_integral(self.domain.pmin, self.p0)
        # rebuilt from the remaining curves so no cancellation error enters g
        if self.positions:
            self.aggregate = combine([p.curve for p in self.positions.values()])
        else:
            self.aggregate = zero_curve(self.domain)
        self.risky_reserve -= risky
        self.numeraire_reserve -= numeraire
        self._after_event()
        return risky, numeraire

    # -- trading ------------------------------------------------------------

    def quote(self, p1: float) -> TradeReceipt:
        """Receipt of moving the price to ``p1`` without executing it."""
        if not self.domain.contains(p1):
            raise EngineError(f"target price {p1} outside [{self.domain.pmin}, {self.domain.pmax}]")
        g = self.aggregate
        if p1 == self.p0:
            return TradeReceipt(self.p0, p1, 0.0, 0.0)
        return TradeReceipt(self.p0, p1, g(self.p0) - g(p1), g.price_integral(self.p0, p1))

    def trade_to_price(self, p1: float) -> TradeReceipt:
        receipt = self.quote(float(p1))
        self.p0 = receipt.p_after
        self.risky_reserve -= receipt.risky_to_trader
        self.numeraire_reserve += receipt.numeraire_from_trader
        self._after_event()
        return receipt

    def trade_exact_risky(self, dq: float) -> TradeReceipt:
        """Buy ``dq`` units of the risky asset (sell if negative)."""
        g = self.aggregate
        target = g(self.p0) - dq
        try:
            p1 = g.invert(target)
        except CurveError as exc:
            raise EngineError(f"cannot trade {dq}: {exc}") from None
        if dq == 0:
            p1 = self.p0
        return self.trade_to_price(p1)

    def profit(self, external_price: float, p1):
        """Arbitrage profit of moving to ``p1`` and unwinding at ``external_price``."""
        g = self.aggregate
        p1 = np.asarray(p1, dtype=float)
        start = g.cumulative_price_integral(self.p0)
        out = external_price * (g(self.p0) - g(p1)) - (g.cumulative_price_integral(p1) - start)
        return float(out) if out.ndim == 0 else out

    def arbitrage_best_response(self, external_price: float, grid_size: int = 1025) -> ArbitrageResult:
        """Leftmost profit-maximising target price for an arbitrageur.

        Candidates are the clamped external price, every breakpoint of the
        aggregate, the current price and a uniform grid; ``tied`` reports whether
        other candidates share the maximum.
        """
        if external_price <= 0:
            raise EngineError("external price must be positive")
        pmin, pmax = self.domain.pmin, self.domain.pmax
        target = min(max(external_price, pmin), pmax)
        cands = np.unique(np.concatenate([
            [target, self.p0], self.aggregate.breakpoints, np.linspace(pmin, pmax, grid_size)]))
        profits = self.profit(external_price, cands)
        g = self.aggregate
        magnitude = external_price * g.scale + abs(g.cumulative_price_integral(pmax))
        tol = 64 * np.finfo(float).eps * max(1.0, magnitude)
        winners = np.flatnonzero(profits >= np.max(profits) - tol)
        i = int(winners[0])
        return ArbitrageResult(float(cands[i]), float(profits[i]), len(winners) > 1)

    def snapshot(self) -> dict:
        return {"p0": self.p0, "risky_reserve": self.risky_reserve,
                "numeraire_reserve": self.numeraire_reserve}


# -- module-level forms of the pool operations --------------------------------

def mint(pool: PoolState, lp_id: str, curve: DemandCurve):
    return pool.mint(lp_id, curve)


def burn(pool: PoolState, lp_id: str):
    return pool.burn(lp_id)


def trade_to_price(pool: PoolState, p1: float) -> TradeReceipt:
    return pool.trade_to_price(p1)


def trade_exact_risky(pool: PoolState, dq: float) -> TradeReceipt:
    return pool.trade_exact_risky(dq)


def arbitrage_best_response(pool: PoolState, external_price: float) -> ArbitrageResult:
    return pool.arbitrage_best_response(external_price)


# -- event sequences ----------------------------------------------------------

@dataclass(frozen=True)
class LedgerRow:
    step: int
    op: str
    p0: float
    risky_reserve: float
    numeraire_reserve: float
    risky_delta: float
    numeraire_delta: float


LEDGER_COLUMNS = ("step", "op", "p0", "risky_reserve", "numeraire_reserve", "risky_delta", "numeraire_delta")


def parse_event(obj: dict, basis: Basis | None = None) -> dict:
    """Validate one event dict, resolving ``coeffs`` mints through ``basis``."""
    if not isinstance(obj, dict) or "op" not in obj:
        raise ValueError(f"event must be an object with an 'op' key: {obj!r}")
    op = obj["op"]
    if op == "mint":
        lp = str(obj["lp"])
        if "curve" in obj:
            curve = DemandCurve.from_json(obj["curve"])
        elif "coeffs" in obj:
            if basis is None:
                raise ValueError("'coeffs' mint needs a mechanism")
            curve = synthesize(basis, obj["coeffs"])
        else:
            raise ValueError("mint needs 'curve' or 'coeffs'")
        return {"op": "mint", "lp": lp, "curve": curve}
    if op == "burn":
        return {"op": "burn", "lp": str(obj["lp"])}
    if op == "trade_price":
        return {"op": "trade_price", "p1": float(obj["p1"])}
    if op == "trade_qty":
        return {"op": "trade_qty", "dq": float(obj["dq"])}
    if op == "arb":
        return {"op": "arb", "p": float(obj["p"])}
    raise ValueError(f"unknown op {op!r}")


def apply_event(pool: PoolState, event: dict) -> None:
    op = event["op"]
    if op == "mint":
        pool.mint(event["lp"], event["curve"])
    elif op == "burn":
        pool.burn(event["lp"])
    elif op == "trade_price":
        pool.trade_to_price(event["p1"])
    elif op == "trade_qty":
        pool.trade_exact_risky(event["dq"])
    elif op == "arb":
        best = pool.arbitrage_best_response(event["p"])
        pool.trade_to_price(best.p1)
    else:
        raise EngineError(f"unknown op {op!r}")


def run_trade_sequence(pool: PoolState, events: Iterable[dict]) -> list[LedgerRow]:
    """Apply events in order and return one ledger row per state, initial state first.

    Raises :class:`EventError` with the failing index on the first bad event.
    """
    ledger = [LedgerRow(0, "init", pool.p0, pool.risky_reserve, pool.numeraire_reserve, 0.0, 0.0)]
    for i, event in enumerate(events):
        risky, numeraire = pool.risky_reserve, pool.numeraire_reserve
        try:
            apply_event(pool, event)
        except (EngineError, CurveError) as exc:
            raise EventError(i, exc) from exc
        ledger.append(LedgerRow(i + 1, event["op"], pool.p0, pool.risky_reserve, pool.numeraire_reserve,
                                pool.risky_reserve - risky, pool.numeraire_reserve - numeraire))
    return ledger


def ledger_to_csv(rows: Iterable[LedgerRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(LEDGER_COLUMNS)
    for r in rows:
        writer.writerow([r.step, r.op, repr(r.p0), repr(r.risky_reserve), repr(r.numeraire_reserve),
                         repr(r.risky_delta), repr(r.numeraire_delta)])
    return buf.getvalue()


def random_event(rng: np.random.Generator, pool: PoolState, basis: Basis, lp_id: str, *,
                 p_mint: float = 0.3, p_burn: float = 0.2, p_trade_qty: float = 0.15,
                 p_arb: float = 0.05) -> dict:
    """One random event that is feasible for the current state of ``pool`` (not applied)."""
    pmin, pmax = basis.domain.pmin, basis.domain.pmax
    u = rng.random()
    live = list(pool.positions)
    if u < p_mint or not live:
        coefs = rng.exponential(1.0, size=len(basis)) * (rng.random(len(basis)) < 0.6)
        return {"op": "mint", "lp": lp_id, "curve": synthesize(basis, coefs)}
    if u < p_mint + p_burn:
        return {"op": "burn", "lp": live[rng.integers(len(live))]}
    if u < p_mint + p_burn + p_trade_qty:
        g = pool.aggregate
        lo, hi = g(pmax), g(pmin)
        return {"op": "trade_qty", "dq": g(pool.p0) - (lo + rng.random() * (hi - lo))}
    if u < p_mint + p_burn + p_trade_qty + p_arb:
        return {"op": "arb", "p": math.exp(rng.uniform(math.log(pmin) - 0.2, math.log(pmax) + 0.2))}
    return {"op": "trade_price", "p1": rng.uniform(pmin, pmax)}


def random_events(rng: np.random.Generator, basis: Basis, n_events: int, *,
                  pool: PoolState | None = None, **probs) -> list[dict]:
    """Generate a feasible random event script by simulating it on a scratch pool."""
    scratch = pool or PoolState(basis.domain)
    events = []
    for i in range(n_events):
        ev = random_event(rng, scratch, basis, f"lp{i}", **probs)
        apply_event(scratch, ev)
        events.append(ev)
    return events
