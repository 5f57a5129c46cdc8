import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from tempcast import arima
from tempcast.diagnostics import (
    Correlogram,
    acf,
    adf_test,
    auto_order,
    chi2_sf,
    confidence_bound,
    correlogram,
    ljung_box,
    pacf,
    schwert_max_lag,
    select_differencing,
    suggest_order,
)
from tempcast.errors import DegenerateSeries, InsufficientData

from oracles import regression_pacf


def direct_acf(x, k):
    """Plain double loop, independent of the vectorised implementation."""
    n = len(x)
    m = sum(x) / n
    num = 0.0
    for t in range(n - k):
        num += (x[t] - m) * (x[t + k] - m)
    den = 0.0
    for t in range(n):
        den += (x[t] - m) ** 2
    return num / den


class TestAcf:
    def test_lag_zero(self):
        assert acf([1.0, 3.0, 2.0, 7.0], 2)[0] == 1.0

    def test_alternating(self):
        x = [(-1.0) ** t for t in range(20)]
        assert direct_acf(x, 1) == pytest.approx(-0.95)
        assert acf(x, 1)[1] == pytest.approx(-0.95, abs=1e-14)

    def test_matches_direct_sum(self):
        x = np.random.default_rng(3).normal(size=60)
        r = acf(x, 10)
        for k in range(11):
            assert r[k] == pytest.approx(direct_acf(list(x), k), abs=1e-13)

    def test_white_noise(self):
        x = np.random.default_rng(1000).standard_normal(1000)
        r = acf(x, 20)
        assert np.all(np.abs(r[1:]) < 3 / math.sqrt(1000))

    def test_constant(self):
        with pytest.raises(DegenerateSeries):
            acf([2.0] * 10, 3)

    def test_bad_lag(self):
        with pytest.raises(InsufficientData):
            acf([1.0, 2.0, 3.0], 3)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 10_000), st.floats(-50, 50).filter(lambda a: abs(a) > 1e-3),
           st.floats(-1e3, 1e3))
    def test_affine_invariance(self, seed, a, b):
        x = np.random.default_rng(seed).normal(size=40)
        np.testing.assert_allclose(acf(a * x + b, 8), acf(x, 8), atol=1e-10)


class TestPacf:
    def test_first_lag_equals_acf(self):
        x = np.random.default_rng(5).normal(size=80)
        assert pacf(x, 5)[0] == acf(x, 5)[1]

    def test_regression_oracle(self):
        x = np.random.default_rng(50).normal(size=50)
        np.testing.assert_allclose(pacf(x, 10), regression_pacf(x, 10), atol=1e-8)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 10_000), st.integers(20, 100))
    def test_regression_oracle_property(self, seed, n):
        x = np.cumsum(np.random.default_rng(seed).normal(size=n))
        lags = min(12, n // 3)
        np.testing.assert_allclose(pacf(x, lags), regression_pacf(x, lags), atol=1e-8)

    def test_ar1_cuts_off(self):
        x = arima.simulate((1, 0, 0), [0.7], [], 0.0, 1.0, 2000, seed=11).values
        bound = confidence_bound(2000)
        p = pacf(x, 5)
        assert p[0] == pytest.approx(0.7, abs=0.05)
        assert np.all(np.abs(p[1:5]) < bound)

    def test_magnitudes(self):
        x = np.random.default_rng(9).normal(size=30)
        cg = correlogram(x, 12)
        assert np.all(np.abs(cg.acf) <= 1 + 1e-9)
        assert np.all(np.abs(cg.pacf) <= 1 + 1e-9)


class TestOrderSelection:
    @pytest.mark.parametrize("n,expected", [(100, 0.196), (400, 0.098), (4, 0.98)])
    def test_confidence_bound(self, n, expected):
        assert confidence_bound(n) == pytest.approx(expected)

    def test_rule(self):
        cg = Correlogram(3, np.array([1.0, 0.8, 0.6, 0.05]), np.array([0.8, 0.05, 0.02]), 0.196)
        assert suggest_order(cg) == (1, 2)

    def test_all_inside(self):
        cg = Correlogram(3, np.array([1.0, 0.1, -0.1, 0.05]), np.array([0.1, -0.05, 0.0]), 0.196)
        assert suggest_order(cg) == (0, 0)

    def test_lag_one_inside_band_with_later_spikes(self):
        cg = Correlogram(3, np.array([1.0, 0.1, 0.9, 0.9]), np.array([0.1, 0.9, 0.9]), 0.196)
        assert suggest_order(cg) == (0, 0)

    def test_cap(self):
        r = np.concatenate([[1.0], np.full(10, 0.9)])
        cg = Correlogram(10, r, np.full(10, 0.9), 0.1)
        assert suggest_order(cg) == (5, 5)

    def test_ar2_suggests_two(self):
        x = arima.simulate((2, 0, 0), [0.5, 0.3], [], 0.0, 1.0, 2000, seed=4).values
        p, q = suggest_order(correlogram(x, 20))
        assert p == 2
        assert q == 5  # slow ACF decay of an AR(2) runs into the cap


class TestAdf:
    def test_schwert(self):
        assert schwert_max_lag(100) == 12
        assert schwert_max_lag(300) == 15

    def test_random_walk_not_rejected(self):
        x = np.cumsum(np.random.default_rng(21).standard_normal(300))
        res = adf_test(x)
        assert not res.reject_unit_root
        assert res.reject_unit_root == (res.statistic < res.critical_values["5%"])

    def test_stationary_ar1_rejected(self):
        x = arima.simulate((1, 0, 0), [0.5], [], 0.0, 1.0, 300, seed=21).values
        assert adf_test(x).reject_unit_root

    def test_ramp_not_rejected(self):
        res = adf_test(np.arange(100, dtype=float))
        assert not res.reject_unit_root

    def test_shift_invariance(self):
        x = arima.simulate((1, 0, 0), [0.8], [], 0.0, 1.0, 200, seed=2).values
        a, b = adf_test(x, 8), adf_test(x + 123.456, 8)
        assert a.lag_order == b.lag_order
        assert a.statistic == pytest.approx(b.statistic, abs=1e-8)

    def test_levels(self):
        x = np.cumsum(np.random.default_rng(0).standard_normal(120))
        for level in ("1%", "5%", "10%"):
            res = adf_test(x, 4, level)
            assert res.reject_unit_root == (res.statistic < res.critical_values[level])

    def test_too_short(self):
        with pytest.raises(InsufficientData):
            adf_test(np.arange(25.0), max_lag=10)

    def test_constant(self):
        with pytest.raises(DegenerateSeries):
            adf_test(np.full(50, 3.0))

    def test_select_differencing_random_walk(self):
        x = np.cumsum(np.random.default_rng(8).standard_normal(300))
        d, results = select_differencing(x)
        assert d == 1
        assert len(results) == 2

    def test_auto_order_white_noise(self):
        x = np.random.default_rng(12).standard_normal(300)
        order, _, _ = auto_order(x)
        assert order == (0, 0, 0)


class TestChiSquare:
    @pytest.mark.parametrize("q,k", [(0.01, 1), (3.0, 10), (25.0, 10), (0.5, 1),
                                     (100.0, 30), (7.7, 4), (40.0, 3), (1e-8, 2)])
    def test_against_scipy(self, q, k):
        assert chi2_sf(q, k) == pytest.approx(stats.chi2.sf(q, k), rel=1e-10, abs=1e-300)


class TestLjungBox:
    def test_white_noise(self):
        e = np.random.default_rng(500).standard_normal(500)
        rep = ljung_box(e, 10, 0)
        assert rep.uncorrelated
        assert rep.mean_within_tolerance
        assert 0 <= rep.ljung_box_p <= 1

    def test_correlated(self):
        e = arima.simulate((1, 0, 0), [0.8], [], 0.0, 1.0, 500, seed=5).values
        assert not ljung_box(e, 10, 0).uncorrelated

    def test_mean_failure(self):
        e = 5.0 + 1e-3 * np.random.default_rng(1).standard_normal(200)
        assert not ljung_box(e, 10, 0).mean_within_tolerance

    def test_statistic_by_hand(self):
        e = np.random.default_rng(2).standard_normal(50)
        n = 50
        expected = n * (n + 2) * sum(direct_acf(list(e), k) ** 2 / (n - k) for k in range(1, 6))
        rep = ljung_box(e, 5, 2)
        assert rep.ljung_box_statistic == pytest.approx(expected, rel=1e-12)
        assert rep.ljung_box_p == pytest.approx(stats.chi2.sf(expected, 3), rel=1e-10)
        assert rep.dof == 3

    def test_degenerate(self):
        with pytest.raises(DegenerateSeries):
            ljung_box(np.ones(30), 5, 0)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10_000))
    def test_ranges(self, seed):
        e = np.random.default_rng(seed).normal(size=60)
        rep = ljung_box(e, 8, 1)
        assert rep.ljung_box_statistic >= 0
        assert 0 <= rep.ljung_box_p <= 1
        assert rep.uncorrelated == (rep.ljung_box_p > 0.05)
