import math

import numpy as np
import pytest

from demandex.curves import CurveError, PriceDomain
from demandex.measure import WeightFunction
from demandex.mechanism import (
    Basis,
    ConeCoefficients,
    cpmm_basis,
    equal_measure_lob,
    equal_measure_ticks,
    geometric_tick_count,
    geometric_ticks,
    lob_basis,
    synthesize,
    univ3_basis,
    univ3_interval_curve,
    uniswap_tick_count,
)

D = PriceDomain(1.0, 4.0)


def test_cpmm_basis():
    b = cpmm_basis(D)
    assert b.complexity == 1
    assert b[0](4.0) == pytest.approx(0.5)


def test_lob_steps():
    b = lob_basis(D, [2.0, 3.0, 4.0])
    assert len(b) == 3
    assert b[0](1.999) == 1.0 and b[0](2.0) == 0.0
    # the tick at pmax is never crossed inside the domain
    assert b[2](4.0) == 1.0
    with pytest.raises(CurveError):
        lob_basis(D, [1.0, 2.0])
    with pytest.raises(CurveError):
        lob_basis(D, [3.0, 2.0])


def test_univ3_interval_curve_shape():
    g = univ3_interval_curve(D, 2.0, 3.0)
    assert g(1.5) == pytest.approx(1 / math.sqrt(2) - 1 / math.sqrt(3))
    assert g(2.5) == pytest.approx(1 / math.sqrt(2.5) - 1 / math.sqrt(3))
    assert g(3.0) == pytest.approx(0.0, abs=1e-15)
    assert g(3.5) == 0.0
    # numeraire locked on the interval is sqrt(hi) - sqrt(lo)
    assert g.price_integral(1.0, 4.0) == pytest.approx(math.sqrt(3) - math.sqrt(2))


def test_univ3_full_range_is_cpmm_minus_constant():
    g = univ3_basis(D, [1.0, 4.0], include_ones=False)[0]
    xs = np.linspace(1, 4, 9)
    assert np.allclose(g(xs), 1 / np.sqrt(xs) - 0.5)


def test_univ3_basis_size():
    assert len(univ3_basis(D, [1.0, 2.0, 4.0])) == 3
    assert len(univ3_basis(D, [1.0, 2.0, 4.0], include_ones=False)) == 2
    with pytest.raises(CurveError):
        univ3_basis(D, [1.5, 4.0])


def test_cone_coefficients_nonnegative():
    with pytest.raises(CurveError):
        ConeCoefficients([1.0, -0.1])
    b = lob_basis(D, [2.0, 3.0])
    with pytest.raises(CurveError):
        synthesize(b, [1.0])
    g = synthesize(b, [1.0, 2.0])
    assert g(1.5) == 3.0 and g(2.5) == 2.0 and g(3.5) == 0.0


def test_equal_measure_ticks_have_equal_mass():
    for w in (WeightFunction.uniform(D), WeightFunction.log_uniform(D)):
        t = np.concatenate([[1.0], equal_measure_ticks(w, 7), [4.0]])
        assert np.allclose(np.diff(w.cdf(t)), 1 / 7)
        b = equal_measure_lob(w, 7)
        assert b.complexity == 7


def test_geometric_tick_count_formula():
    for eps in (0.2, 0.1, 0.05, 0.02):
        for p in (1.0, 2.0):
            delta = math.exp(eps ** p * D.log_ratio) - 1
            n = math.ceil(D.log_ratio / math.log1p(delta) - 1e-9)
            assert geometric_tick_count(D, eps, p) == n
            t = geometric_ticks(D, eps, p)
            assert t[0] == D.pmin and t[-1] == D.pmax
            assert np.all(np.diff(np.log(t)) <= math.log1p(delta) * (1 + 1e-9))


def test_uniswap_count_for_ratio_e():
    assert abs(uniswap_tick_count(PriceDomain(1.0, math.e)) - 10000.5) <= 1


@pytest.mark.parametrize("basis", [
    cpmm_basis(D), lob_basis(D, [2.0, 4.0]), univ3_basis(D, [1.0, 2.0, 4.0]),
    Basis((univ3_interval_curve(D, 1.0, 2.0),)),
], ids=["cpmm", "lob", "univ3", "custom"])
def test_basis_json_roundtrip(basis):
    again = Basis.from_json(basis.to_json())
    xs = np.linspace(1, 4, 13)
    assert np.allclose(basis.design_matrix(xs), again.design_matrix(xs))
    assert again.kind == basis.kind
