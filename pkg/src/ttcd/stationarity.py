"""ADF and KPSS stationarity tests with table-interpolated p-values."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import TimeSeriesDataset

ALPHA = 0.05

# Dickey-Fuller tau distribution, constant / no trend. Columns are the
# cumulative probabilities, rows the sample size (inf last).
_DF_PROBS = np.array([0.01, 0.025, 0.05, 0.10, 0.90, 0.95, 0.975, 0.99])
_DF_SIZES = np.array([25, 50, 100, 250, 500, np.inf])
_DF_TABLE = np.array([
    [-3.75, -3.33, -3.00, -2.63, -0.37, 0.00, 0.34, 0.72],
    [-3.58, -3.22, -2.93, -2.60, -0.40, -0.03, 0.29, 0.66],
    [-3.51, -3.17, -2.89, -2.58, -0.42, -0.05, 0.26, 0.63],
    [-3.46, -3.14, -2.88, -2.57, -0.42, -0.06, 0.24, 0.62],
    [-3.44, -3.13, -2.87, -2.57, -0.43, -0.07, 0.24, 0.61],
    [-3.43, -3.12, -2.86, -2.57, -0.44, -0.07, 0.23, 0.60],
])
ADF_P_RANGE = (0.001, 0.99)

# KPSS level-stationarity upper-tail critical values
_KPSS_PVALS = np.array([0.10, 0.05, 0.025, 0.01])
_KPSS_CRIT = np.array([0.347, 0.463, 0.574, 0.739])
KPSS_P_RANGE = (0.01, 0.10)


class StationarityError(ValueError):
    pass


def _validate(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64).ravel()
    if x.size < 20:
        raise StationarityError(f"series too short for a unit-root test ({x.size} < 20)")
    if not np.isfinite(x).all():
        raise StationarityError("series contains non-finite values")
    if np.ptp(x) == 0:
        raise StationarityError("series has zero variance")
    return x


def _ols(y, X):
    beta, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ beta
    return beta, resid


def _adf_design(x: np.ndarray, lags: int, nobs: int | None = None):
    """Regressors [1, x_{t-1}, dx_{t-1..t-lags}] on the last ``nobs`` rows."""
    dx = np.diff(x)
    rows = dx.size - lags
    if nobs is None:
        nobs = rows
    cols = [np.ones(nobs), x[lags : lags + rows][-nobs:]]
    for k in range(1, lags + 1):
        cols.append(dx[lags - k : lags - k + rows][-nobs:])
    return dx[lags:][-nobs:], np.column_stack(cols)


def adf_pvalue(stat: float, nobs: int) -> float:
    # critical values for this sample size, interpolated in 1/T
    inv = 1.0 / _DF_SIZES
    cvs = np.array([np.interp(1.0 / nobs, inv[::-1], col[::-1]) for col in _DF_TABLE.T])
    if stat <= cvs[0]:
        slope = (_DF_PROBS[1] - _DF_PROBS[0]) / (cvs[1] - cvs[0])
        p = _DF_PROBS[0] + slope * (stat - cvs[0])
    elif stat >= cvs[-1]:
        slope = (_DF_PROBS[-1] - _DF_PROBS[-2]) / (cvs[-1] - cvs[-2])
        p = _DF_PROBS[-1] + slope * (stat - cvs[-1])
    else:
        p = np.interp(stat, cvs, _DF_PROBS)
    return float(np.clip(p, *ADF_P_RANGE))


def adf_test(x, max_lag: int | str = "auto") -> tuple[float, float]:
    """Augmented Dickey-Fuller test with a constant and no trend.

    With ``max_lag="auto"`` the lag order is chosen by AIC among
    0..floor(12 (T/100)^(1/4)) on a common sample, then the chosen model
    is refit on all usable rows. Returns (t-statistic of x_{t-1}, p-value).
    """
    x = _validate(x)
    # the statistic is invariant to a * x + b; standardizing keeps the regression well conditioned
    x = (x - x.mean()) / x.std()
    T = x.size
    if max_lag == "auto":
        upper = int(np.floor(12 * (T / 100) ** 0.25))
        upper = min(upper, T // 2 - 3)
        nobs = x.size - 1 - upper
        best, best_aic = 0, np.inf
        for lags in range(upper + 1):
            y, X = _adf_design(x, lags, nobs)
            _, resid = _ols(y, X)
            aic = nobs * np.log(resid @ resid / nobs) + 2 * X.shape[1]
            if aic < best_aic - 1e-12:
                best, best_aic = lags, aic
        lags = best
    else:
        lags = int(max_lag)
        if lags < 0 or lags > T // 2 - 3:
            raise StationarityError(f"lag order {lags} out of range for T={T}")
    y, X = _adf_design(x, lags)
    beta, resid = _ols(y, X)
    dof = y.size - X.shape[1]
    s2 = resid @ resid / dof
    cov = s2 * np.linalg.inv(X.T @ X)
    stat = float(beta[1] / np.sqrt(cov[1, 1]))
    return stat, adf_pvalue(stat, y.size)


def kpss_pvalue(stat: float) -> float:
    return float(np.clip(np.interp(stat, _KPSS_CRIT, _KPSS_PVALS), *KPSS_P_RANGE))


def kpss_test(x, bandwidth: int | str = "auto") -> tuple[float, float]:
    """Level-stationarity KPSS test, Bartlett-kernel Newey-West variance."""
    x = _validate(x)
    T = x.size
    lags = int(np.floor(4 * (T / 100) ** 0.25)) if bandwidth == "auto" else int(bandwidth)
    if not 0 <= lags < T:
        raise StationarityError(f"bandwidth {lags} out of range for T={T}")
    e = x - x.mean()
    s2 = e @ e
    for k in range(1, lags + 1):
        s2 += 2.0 * (1.0 - k / (lags + 1.0)) * (e[k:] @ e[:-k])
    s2 /= T
    S = np.cumsum(e)
    stat = float((S @ S) / (T**2 * s2))
    return stat, kpss_pvalue(stat)


@dataclass(frozen=True)
class TestResult:
    variable: str
    test: str
    statistic: float
    pvalue: float
    stationary: bool


@dataclass(frozen=True)
class StationarityReport:
    results: tuple[TestResult, ...]

    def get(self, variable: str, test: str) -> TestResult:
        for r in self.results:
            if r.variable == variable and r.test == test:
                return r
        raise KeyError((variable, test))

    def format_table(self) -> str:
        names = list(dict.fromkeys(r.variable for r in self.results))
        width = max(9, *(len(v) for v in names))
        lines = [
            f"{'Variable':<{width}} | {'ADF p':>7} {'Stationary':>10} | {'KPSS p':>7} {'Stationary':>10}",
            "-" * (width + 42),
        ]
        for v in names:
            a, k = self.get(v, "adf"), self.get(v, "kpss")
            lines.append(
                f"{v:<{width}} | {a.pvalue:7.2f} {'Yes' if a.stationary else 'No':>10} | "
                f"{k.pvalue:7.2f} {'Yes' if k.stationary else 'No':>10}"
            )
        return "\n".join(lines)


def profile_dataset(ds: TimeSeriesDataset, alpha: float = ALPHA) -> StationarityReport:
    """Run both tests on every variable.

    ADF's null is a unit root, so p > alpha means non-stationary; KPSS's null
    is stationarity, so p < alpha means non-stationary.
    """
    out = []
    for j, name in enumerate(ds.names):
        stat, p = adf_test(ds.data[:, j])
        out.append(TestResult(name, "adf", stat, p, stationary=p <= alpha))
        stat, p = kpss_test(ds.data[:, j])
        out.append(TestResult(name, "kpss", stat, p, stationary=p >= alpha))
    return StationarityReport(tuple(out))
