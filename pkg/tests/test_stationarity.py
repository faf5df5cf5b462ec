import numpy as np
import pytest
from hypothesis import example, given, settings
from hypothesis import strategies as st
from statsmodels.tsa.stattools import adfuller, kpss

from ttcd.data import TimeSeriesDataset
from ttcd.stationarity import (ADF_P_RANGE, KPSS_P_RANGE, StationarityError, adf_pvalue, adf_test, kpss_pvalue,
                               kpss_test, profile_dataset)

TRIALS = 100


def white_noise(seed, T=500):
    return np.random.default_rng(seed).standard_normal(T)


def random_walk(seed, T=500):
    return np.cumsum(np.random.default_rng(10_000 + seed).standard_normal(T))


class TestMonteCarlo:
    def test_adf_rejects_white_noise(self):
        assert sum(adf_test(white_noise(s))[1] < 0.05 for s in range(TRIALS)) >= 90

    def test_adf_keeps_random_walk(self):
        assert sum(adf_test(random_walk(s))[1] > 0.05 for s in range(TRIALS)) >= 90

    def test_kpss_keeps_white_noise(self):
        assert sum(kpss_test(white_noise(s))[1] >= 0.05 for s in range(TRIALS)) >= 90

    def test_kpss_rejects_random_walk(self):
        assert sum(kpss_test(random_walk(s))[1] <= 0.05 for s in range(TRIALS)) >= 90


class TestStatisticOracle:
    """The statistics (not the p-values) should agree with statsmodels."""

    @pytest.mark.parametrize("seed", range(5))
    def test_adf_fixed_lag(self, seed):
        x = random_walk(seed, 300) + 0.3 * white_noise(seed, 300)
        ref = adfuller(x, maxlag=3, regression="c", autolag=None)[0]
        assert adf_test(x, max_lag=3)[0] == pytest.approx(ref, abs=1e-8)

    @pytest.mark.parametrize("seed", range(5))
    def test_adf_auto_lag(self, seed):
        x = np.convolve(white_noise(seed, 400), [1, 0.6, 0.3], mode="same")
        assert adf_test(x)[0] == pytest.approx(adfuller(x, regression="c", autolag="AIC")[0], abs=1e-8)

    @pytest.mark.filterwarnings("ignore::statsmodels.tools.sm_exceptions.InterpolationWarning")
    @pytest.mark.parametrize("seed", range(5))
    def test_kpss(self, seed):
        x = random_walk(seed, 250)
        T = x.size
        ref = kpss(x, regression="c", nlags=int(np.floor(4 * (T / 100) ** 0.25)))[0]
        assert kpss_test(x)[0] == pytest.approx(ref, abs=1e-8)


class TestInvariance:
    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10_000), st.floats(0.01, 100) | st.floats(-100, -0.01), st.floats(-1e3, 1e3))
    @example(0, 0.01, 106.0)
    def test_adf_affine(self, seed, a, b):
        x = white_noise(seed, 200) + 0.5 * random_walk(seed, 200)
        assert abs(adf_test(a * x + b)[0] - adf_test(x)[0]) <= 1e-8

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10_000), st.floats(0.01, 100) | st.floats(-100, -0.01), st.floats(-1e3, 1e3))
    @example(0, 0.01, 106.0)
    def test_kpss_affine(self, seed, a, b):
        x = random_walk(seed, 200)
        assert abs(kpss_test(a * x + b)[0] - kpss_test(x)[0]) <= 1e-8


class TestPValues:
    def test_adf_monotone(self):
        stats = np.linspace(-8, 4, 400)
        p = [adf_pvalue(s, 500) for s in stats]
        assert np.all(np.diff(p) >= 0)
        assert p[0] == ADF_P_RANGE[0] and p[-1] == ADF_P_RANGE[1]

    def test_kpss_monotone(self):
        stats = np.linspace(0, 2, 400)
        p = [kpss_pvalue(s) for s in stats]
        assert np.all(np.diff(p) <= 0)
        assert p[0] == KPSS_P_RANGE[1] and p[-1] == KPSS_P_RANGE[0]

    def test_adf_critical_value(self):
        assert adf_pvalue(-2.86, 10**6) == pytest.approx(0.05, abs=1e-3)

    def test_kpss_critical_value(self):
        assert kpss_pvalue(0.463) == pytest.approx(0.05, abs=1e-12)


class TestErrors:
    def test_constant_series(self):
        with pytest.raises(StationarityError):
            adf_test(np.ones(100))
        with pytest.raises(StationarityError):
            kpss_test(np.ones(100))

    def test_too_short(self):
        with pytest.raises(StationarityError):
            adf_test(np.arange(5.0))


def test_report_table():
    ds = TimeSeriesDataset(["noise", "walk"], np.column_stack([white_noise(2), random_walk(2)]))
    report = profile_dataset(ds)
    assert report.get("noise", "adf").stationary and report.get("noise", "kpss").stationary
    assert not report.get("walk", "adf").stationary and not report.get("walk", "kpss").stationary
    table = report.format_table()
    assert "walk" in table and "No" in table and "Yes" in table
