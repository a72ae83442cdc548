import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from demandex.curves import (
    CurveError,
    DemandCurve,
    PriceDomain,
    add,
    combine,
    constant_curve,
    from_pieces,
    inv_sqrt_curve,
    invert_quantity,
    linear_curve,
    scale,
    step_curve,
    stieltjes_price_integral,
)

from conftest import random_curve, random_domain, stieltjes_oracle

D14 = PriceDomain(1.0, 4.0)
D13 = PriceDomain(1.0, 3.0)


def test_domain_rejects_bad_bounds():
    for lo, hi in [(0.0, 1.0), (2.0, 2.0), (3.0, 1.0), (1.0, math.inf)]:
        with pytest.raises(CurveError):
            PriceDomain(lo, hi)


def test_inv_sqrt_values_and_extension():
    g = inv_sqrt_curve(D14)
    assert g(4.0) == pytest.approx(0.5)
    assert g(9.0) == pytest.approx(0.5)
    assert g(0.25) == pytest.approx(1.0)
    assert np.allclose(g(np.array([1.0, 4.0])), [1.0, 0.5])


def test_nonpositive_price_raises():
    g = inv_sqrt_curve(D14)
    with pytest.raises(CurveError):
        g(0.0)
    with pytest.raises(CurveError):
        g(np.array([1.0, -1.0]))


def test_inv_sqrt_integral_and_inverse():
    g = inv_sqrt_curve(D14)
    assert stieltjes_price_integral(g, 1.0, 4.0) == pytest.approx(1.0, rel=1e-14)
    assert invert_quantity(g, 0.5) == pytest.approx(4.0)


def test_step_is_right_continuous():
    g = step_curve(D13, [2.0], [1.0, 0.0])
    assert g(2.0) == 0.0
    assert g.left_limit(2.0) == 1.0
    assert g.price_integral(1.0, 3.0) == pytest.approx(2.0)
    # a jump at the lower bound is excluded, at the upper bound included
    assert g.price_integral(2.0, 3.0) == 0.0
    assert g.price_integral(1.0, 2.0) == pytest.approx(2.0)
    assert invert_quantity(g, 0.5) == 2.0


def test_invalid_curves_rejected():
    with pytest.raises(CurveError):
        DemandCurve(D13, [1.0, 2.0, 3.0], [0.0, 0.0], [0.0, 1.0])  # upward jump
    with pytest.raises(CurveError):
        DemandCurve(D13, [1.0, 3.0], [-1.0], [2.0])  # increasing
    with pytest.raises(CurveError):
        linear_curve(D13, 0.0, -1.0)  # negative
    with pytest.raises(CurveError):
        DemandCurve(D13, [1.0, 2.5], [0.0], [1.0])  # does not cover the domain


def test_scale_rejects_negative():
    with pytest.raises(CurveError):
        scale(inv_sqrt_curve(D14), -1.0)


def test_invert_out_of_range():
    with pytest.raises(CurveError):
        inv_sqrt_curve(D14).invert(2.0)


def test_linear_from_pieces_matches_constructor():
    f = from_pieces(D13, [{"from": 1.0, "to": 3.0, "kind": "linear", "start": 1.0, "end": 0.0}])
    g = linear_curve(D13, 1.0, 0.0)
    xs = np.linspace(1, 3, 11)
    assert np.allclose(f(xs), g(xs))
    assert f(2.0) == pytest.approx(0.5)


def test_from_pieces_needs_contiguity():
    with pytest.raises(CurveError):
        from_pieces(D13, [{"from": 1.0, "to": 2.0, "kind": "constant", "c": 1.0},
                          {"from": 2.5, "to": 3.0, "kind": "constant", "c": 0.0}])


def test_stieltjes_matches_oracle_on_random_curves(rng):
    for _ in range(100):
        d = random_domain(rng)
        g = random_curve(rng, d, n_seg=int(rng.integers(1, 7)))
        lo, hi = np.sort(rng.uniform(d.pmin * 0.8, d.pmax * 1.2, size=2))
        expected = stieltjes_oracle(g, lo, hi)
        assert g.price_integral(lo, hi) == pytest.approx(expected, rel=1e-9, abs=1e-12)


def test_stieltjes_by_parts(rng):
    # -int p dg = lo g(lo) - hi g(hi) + int g dp on (lo, hi]
    for _ in range(50):
        d = random_domain(rng)
        g = random_curve(rng, d)
        lo, hi = np.sort(rng.uniform(d.pmin, d.pmax, size=2))
        pts = [p for p in g.breakpoints if lo < p < hi]
        area, _ = quad(g, lo, hi, points=pts or None, limit=200, epsabs=0, epsrel=1e-12)
        assert g.price_integral(lo, hi) == pytest.approx(lo * g(lo) - hi * g(hi) + area, rel=1e-8, abs=1e-12)


def test_cumulative_integral_agrees_with_pairwise(rng):
    d = random_domain(rng)
    g = random_curve(rng, d, n_seg=6)
    xs = np.linspace(d.pmin, d.pmax, 23)
    cum = g.cumulative_price_integral(xs)
    for x, c in zip(xs, cum):
        assert c == pytest.approx(g.price_integral(d.pmin, x), rel=1e-12, abs=1e-14)


def test_quantity_integral_matches_quad(rng):
    d = random_domain(rng)
    g = random_curve(rng, d)
    lo, hi = d.pmin * 0.5, d.pmax * 1.5
    expected, _ = quad(g, lo, hi, points=list(g.breakpoints), limit=200)
    assert g.quantity_integral(lo, hi) == pytest.approx(expected, rel=1e-9)


def test_combine_is_pointwise(rng):
    d = random_domain(rng)
    curves = [random_curve(rng, d) for _ in range(4)]
    w = rng.uniform(0, 2, size=4)
    h = combine(curves, w)
    xs = np.concatenate([rng.uniform(d.pmin, d.pmax, 50), np.concatenate([c.breakpoints for c in curves])])
    assert np.allclose(h(xs), sum(wi * c(xs) for wi, c in zip(w, curves)), rtol=1e-12, atol=1e-12)
    assert h.is_valid()


def test_add_and_mul_operators():
    g = inv_sqrt_curve(D14)
    h = add(g, constant_curve(D14, 1.0))
    assert h(4.0) == pytest.approx(1.5)
    assert (g + g)(1.0) == pytest.approx(2.0)
    assert (3 * g)(4.0) == pytest.approx(1.5)
    with pytest.raises(CurveError):
        add(g, constant_curve(D13, 1.0))


def test_invert_is_leftmost_solution(rng):
    for _ in range(50):
        d = random_domain(rng)
        g = random_curve(rng, d)
        q = rng.uniform(g(d.pmax), g(d.pmin))
        p = g.invert(q)
        assert g(p) <= q + 1e-9 * g.scale
        if p > d.pmin:
            assert g.left_limit(p) >= q - 1e-9 * g.scale
            assert g(p * (1 - 1e-6)) > q - 1e-9 * g.scale


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n_seg=st.integers(1, 6))
def test_json_roundtrip(seed, n_seg):
    rng = np.random.default_rng(seed)
    d = random_domain(rng)
    g = random_curve(rng, d, n_seg)
    h = DemandCurve.from_json(g.to_json())
    xs = np.linspace(d.pmin, d.pmax, 31)
    assert np.allclose(g(xs), h(xs), rtol=1e-12, atol=1e-12)


@settings(max_examples=80, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_random_curves_are_monotone_and_additive(seed):
    rng = np.random.default_rng(seed)
    d = random_domain(rng)
    g = random_curve(rng, d)
    xs = np.sort(rng.uniform(d.pmin, d.pmax, 200))
    vals = g(xs)
    assert np.all(np.diff(vals) <= 1e-12 * g.scale)
    assert np.all(vals >= -1e-12 * g.scale)
    a, c, b = np.sort(rng.uniform(d.pmin, d.pmax, 3))
    assert g.price_integral(a, b) == pytest.approx(g.price_integral(a, c) + g.price_integral(c, b),
                                                   rel=1e-10, abs=1e-12)
    assert g.price_integral(b, a) == -g.price_integral(a, b)
    assert g.price_integral(a, b) >= -1e-12
