"""Command-line experiments.

Exit codes: 0 success, 1 property breach (insolvency, failed event, bound
violation), 2 input error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .adversary import err_estimate, lower_bound_run
from .approx import ApproxConfig, TargetClassBounds, approx_report, lob_epsilon_bound, v3_epsilon_bound
from .curves import CurveError, DemandCurve, PriceDomain
from .engine import EventError, PoolState, SolvencyError, ledger_to_csv, parse_event, run_trade_sequence
from .mechanism import Basis, equal_measure_lob, geometric_ticks, synthesize, univ3_basis
from .measure import WeightFunction

EXIT_OK, EXIT_BREACH, EXIT_INPUT = 0, 1, 2
TRADEOFF_COLUMNS = ("epsilon", "complexity", "mechanism", "error_est", "error_bound")


class InputError(Exception):
    pass


def _load_json(path: str):
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc


def _load_mechanism(path: str) -> Basis:
    try:
        return Basis.from_json(_load_json(path))
    except CurveError as exc:
        raise InputError(f"bad mechanism file {path}: {exc}") from exc


def _load_weight(path: str | None, domain: PriceDomain) -> WeightFunction:
    if path is None:
        return WeightFunction.uniform(domain)
    try:
        w = WeightFunction.from_json(_load_json(path))
    except CurveError as exc:
        raise InputError(f"bad weight file {path}: {exc}") from exc
    if w.domain != domain:
        raise InputError("weight domain differs from mechanism domain")
    return w


def _load_events(path: str, basis: Basis) -> list[dict]:
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    events = []
    for lineno, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            ev = parse_event(json.loads(line), basis)
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise InputError(f"{path}:{lineno}: {exc}") from exc
        if ev["op"] == "mint" and ev["curve"].domain != basis.domain:
            raise InputError(f"{path}:{lineno}: curve domain differs from mechanism domain")
        events.append(ev)
    return events


def _load_prices(path: str) -> list[float]:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    try:
        data = json.loads(text)
        prices = data if isinstance(data, list) else data["prices"]
    except (json.JSONDecodeError, KeyError, TypeError):
        prices = [line for line in text.split() if line]
    try:
        prices = [float(p) for p in prices]
    except (TypeError, ValueError) as exc:
        raise InputError(f"bad price path in {path}: {exc}") from exc
    if any(not (p > 0 and math.isfinite(p)) for p in prices):
        raise InputError("prices must be positive and finite")
    return prices


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _num(x: float) -> str:
    return repr(float(x))


# -- subcommands --------------------------------------------------------------

def cmd_simulate(args) -> int:
    basis = _load_mechanism(args.mechanism)
    events = _load_events(args.events, basis)
    try:
        pool = PoolState(basis.domain, args.p0)
    except Exception as exc:
        raise InputError(str(exc)) from exc
    try:
        ledger = run_trade_sequence(pool, events)
    except EventError as exc:
        kind = "solvency breach" if isinstance(exc.cause, SolvencyError) else "event rejected"
        print(f"{kind} at step {exc.index + 1}: {exc.cause}", file=sys.stderr)
        return EXIT_BREACH
    _emit(ledger_to_csv(ledger), args.out)
    return EXIT_OK


def cmd_approx(args) -> int:
    basis = _load_mechanism(args.mechanism)
    try:
        f = DemandCurve.from_json(_load_json(args.curve))
    except CurveError as exc:
        raise InputError(f"bad curve file: {exc}") from exc
    if f.domain != basis.domain:
        raise InputError("curve domain differs from mechanism domain")
    w = _load_weight(args.weight, basis.domain)
    report = approx_report(f, basis, w, ApproxConfig(p_exp=args.p, grid_size=args.grid_size))
    _emit(json.dumps(report) + "\n", args.out)
    return EXIT_OK


def _tradeoff_row(task):
    mech, eps, p, domain_json, weight_json, bounds, seed, n_random, jumps, grid_size = task
    domain = PriceDomain.from_json(domain_json)
    w = WeightFunction.from_json(weight_json) if weight_json else WeightFunction.uniform(domain)
    bounds = TargetClassBounds(*bounds)
    cfg = ApproxConfig(p_exp=p, grid_size=grid_size)
    if mech == "lob":
        k = math.ceil(1.0 / eps ** p * (1 - 1e-12))
        basis = equal_measure_lob(w, k)
        bound = lob_epsilon_bound(eps, bounds)
    else:
        ticks = geometric_ticks(domain, eps, p)
        basis = univ3_basis(domain, ticks)
        bound = v3_epsilon_bound(eps, bounds, w.interval_constant(ticks, p))
    est = err_estimate(basis, w, bounds, cfg, sampler_seed=seed, n_random=n_random, jumps=jumps)
    return eps, len(basis), mech, est.value, bound


def tradeoff_tasks(config: dict, seed: int, p: float) -> list[tuple]:
    domain = PriceDomain.from_json(config["domain"])
    weight = config.get("weight")
    if weight is not None:
        WeightFunction.from_json(weight)
    b = config.get("bounds", {})
    bounds = TargetClassBounds(float(b.get("fmin", 0.0)), float(b.get("fmax", 1.0)))
    epsilons = [float(e) for e in config["epsilons"]]
    if any(not (0 < e <= 1) for e in epsilons):
        raise InputError("epsilon values must lie in (0, 1]")
    mechanisms = config.get("mechanisms", ["lob", "univ3"])
    n_random = int(config.get("n_random", 16))
    jumps = int(config.get("jumps", 8))
    grid_size = int(config.get("grid_size", 1000))
    tasks = []
    children = np.random.SeedSequence(seed).spawn(len(epsilons) * len(mechanisms))
    for i, eps in enumerate(epsilons):
        for j, mech in enumerate(mechanisms):
            if mech not in ("lob", "univ3"):
                raise InputError(f"unknown tradeoff mechanism {mech!r}")
            row_seed = int(children[i * len(mechanisms) + j].generate_state(1)[0])
            tasks.append((mech, eps, p, domain.to_json(), weight, (bounds.fmin, bounds.fmax),
                          row_seed, n_random, jumps, grid_size))
    return tasks


def cmd_tradeoff(args) -> int:
    config = _load_json(args.config)
    try:
        seed = args.seed if args.seed is not None else int(config.get("seed", 0))
        p = args.p if args.p_given else float(config.get("p", 1))
        tasks = tradeoff_tasks(config, seed, p)
    except (KeyError, TypeError, ValueError, CurveError) as exc:
        raise InputError(f"bad tradeoff config: {exc}") from exc
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as ex:
            rows = list(ex.map(_tradeoff_row, tasks))
    else:
        rows = [_tradeoff_row(t) for t in tasks]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(TRADEOFF_COLUMNS)
    breach = False
    for eps, k, mech, est, bound in rows:
        writer.writerow([_num(eps), k, mech, _num(est), _num(bound)])
        breach = breach or est > bound + 1e-9
    _emit(buf.getvalue(), args.out)
    return EXIT_BREACH if breach else EXIT_OK


def cmd_lowerbound(args) -> int:
    basis = _load_mechanism(args.mechanism)
    w = _load_weight(args.weight, basis.domain)
    try:
        bounds = TargetClassBounds(args.fmin, args.fmax)
    except CurveError as exc:
        raise InputError(str(exc)) from exc
    report = lower_bound_run(basis, w, bounds, ApproxConfig(p_exp=args.p, grid_size=args.grid_size), n=args.n)
    out = report.to_json()
    out["flag"] = "adversary absorbed" if report.absorbed else None
    _emit(json.dumps(out) + "\n", args.out)
    return EXIT_OK


ARB_COLUMNS = ("step", "external_price", "p0", "profit", "cumulative_profit", "risky_reserve",
               "numeraire_reserve", "tied")


def cmd_arbitrage(args) -> int:
    basis = _load_mechanism(args.mechanism)
    prices = _load_prices(args.prices)
    coefs = np.ones(len(basis)) if args.coeffs is None else np.array(
        [float(c) for c in args.coeffs.split(",")])
    try:
        pool = PoolState(basis.domain, args.p0)
        pool.mint("lp0", synthesize(basis, coefs))
    except (CurveError, ValueError) as exc:
        raise InputError(str(exc)) from exc
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(ARB_COLUMNS)
    writer.writerow([0, "", _num(pool.p0), _num(0.0), _num(0.0), _num(pool.risky_reserve),
                     _num(pool.numeraire_reserve), ""])
    total = 0.0
    for step, p in enumerate(prices, 1):
        best = pool.arbitrage_best_response(p)
        pool.trade_to_price(best.p1)
        total += best.profit
        writer.writerow([step, _num(p), _num(pool.p0), _num(best.profit), _num(total),
                         _num(pool.risky_reserve), _num(pool.numeraire_reserve), int(best.tied)])
    _emit(buf.getvalue(), args.out)
    return EXIT_OK


# -- argument parsing ---------------------------------------------------------

class _StoreP(argparse.Action):
    def __call__(self, parser, namespace, values, option_string=None):
        setattr(namespace, self.dest, values)
        namespace.p_given = True


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", default=None, help="output path (default stdout)")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--jobs", type=int, default=1)
    common.add_argument("--p", type=float, choices=(1.0, 2.0), default=1.0, action=_StoreP)

    parser = argparse.ArgumentParser(prog="demandex", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("simulate", parents=[common], help="run an event script through the engine")
    sp.add_argument("events")
    sp.add_argument("mechanism")
    sp.add_argument("--p0", type=float, default=None)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("approx", parents=[common], help="best approximation of a curve in a cone")
    sp.add_argument("curve")
    sp.add_argument("mechanism")
    sp.add_argument("weight", nargs="?")
    sp.add_argument("--grid-size", type=int, default=1000)
    sp.set_defaults(func=cmd_approx)

    sp = sub.add_parser("tradeoff", parents=[common], help="complexity/error sweep over epsilon")
    sp.add_argument("config")
    sp.set_defaults(func=cmd_tradeoff)

    sp = sub.add_parser("lowerbound", parents=[common], help="adversarial step family vs a mechanism")
    sp.add_argument("mechanism")
    sp.add_argument("weight", nargs="?")
    sp.add_argument("--fmin", type=float, default=0.0)
    sp.add_argument("--fmax", type=float, default=1.0)
    sp.add_argument("--n", type=int, default=None)
    sp.add_argument("--grid-size", type=int, default=1000)
    sp.set_defaults(func=cmd_lowerbound)

    sp = sub.add_parser("arbitrage", parents=[common], help="arbitrageur best responses along a price path")
    sp.add_argument("mechanism")
    sp.add_argument("prices")
    sp.add_argument("--coeffs", default=None, help="comma-separated LP coefficients (default all ones)")
    sp.add_argument("--p0", type=float, default=None)
    sp.set_defaults(func=cmd_arbitrage)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    if not hasattr(args, "p_given"):
        args.p_given = False
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
