"""Box-Jenkins identification and checking tools.

Stationarity is tested with an augmented Dickey-Fuller regression, model
orders are read off the ACF/PACF correlogram, and fitted residuals are
checked for zero mean and whiteness with a Ljung-Box portmanteau test.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DegenerateSeries, InsufficientData, NumericalError
from .series_io import as_values

# Constant, no-trend asymptotic critical values (MacKinnon 2010, n -> inf).
ADF_CRITICAL_VALUES = {"1%": -3.43, "5%": -2.86, "10%": -2.57}
MAX_SUGGESTED_ORDER = 5


@dataclass(frozen=True)
class Correlogram:
    max_lag: int
    acf: np.ndarray  # lags 0..max_lag
    pacf: np.ndarray  # lags 1..max_lag, pacf[0] is lag 1
    confidence_bound: float

    def rows(self):
        """Yield ``(lag, acf, pacf)`` for lags 1..max_lag."""
        for k in range(1, self.max_lag + 1):
            yield k, float(self.acf[k]), float(self.pacf[k - 1])


@dataclass(frozen=True)
class AdfResult:
    statistic: float
    lag_order: int
    critical_values: dict
    level: str
    reject_unit_root: bool
    nobs: int


@dataclass(frozen=True)
class ResidualReport:
    residual_mean: float
    mean_within_tolerance: bool
    ljung_box_statistic: float
    ljung_box_p: float
    uncorrelated: bool
    lags: int
    dof: int


def acf(series, max_lag: int) -> np.ndarray:
    """Biased sample autocorrelation for lags ``0..max_lag``.

    Every lag shares the lag-0 denominator, which keeps the implied
    autocovariance sequence positive semidefinite.
    """
    x = as_values(series)
    n = len(x)
    if not 1 <= max_lag < n:
        raise InsufficientData(f"need 1 <= max_lag < n, got max_lag={max_lag}, n={n}")
    dev = x - x.mean()
    denom = float(dev @ dev)
    if denom <= 0 or denom <= 1e-28 * max(1.0, float(x @ x)):
        raise DegenerateSeries("autocorrelation is undefined for a constant series")
    out = np.empty(max_lag + 1)
    out[0] = 1.0
    for k in range(1, max_lag + 1):
        out[k] = float(dev[:-k] @ dev[k:]) / denom
    return out


def durbin_levinson(rho) -> tuple[np.ndarray, np.ndarray]:
    """Run the Durbin-Levinson recursion over autocorrelations ``rho[0..m]``.

    Returns the partial autocorrelations for lags 1..m and the AR(m)
    coefficients solving the Yule-Walker system.
    """
    rho = np.asarray(rho, dtype=float)
    m = len(rho) - 1
    pac = np.zeros(m)
    phi = np.zeros(0)
    v = 1.0
    for k in range(1, m + 1):
        if v <= 0:
            raise NumericalError(f"prediction error variance non-positive at lag {k}")
        kk = (rho[k] - phi @ rho[k - 1:0:-1]) / v if k > 1 else rho[1]
        phi = np.concatenate([phi - kk * phi[::-1], [kk]])
        v *= 1.0 - kk * kk
        pac[k - 1] = kk
    return pac, phi


def pacf(series, max_lag: int) -> np.ndarray:
    """Partial autocorrelation for lags ``1..max_lag`` (index 0 is lag 1)."""
    pac, _ = durbin_levinson(acf(series, max_lag))
    return pac


def yule_walker(series, order: int) -> np.ndarray:
    """AR coefficients from the Yule-Walker equations on the sample ACF."""
    if order == 0:
        return np.zeros(0)
    _, phi = durbin_levinson(acf(series, order))
    return phi


def confidence_bound(n: int) -> float:
    """Half-width of the approximate 95% white-noise band."""
    if n < 2:
        raise InsufficientData("confidence band needs n >= 2")
    return 1.96 / math.sqrt(n)


def default_correlogram_lag(n: int) -> int:
    return max(1, min(24, n // 2 - 1))


def correlogram(series, max_lag: int | None = None) -> Correlogram:
    x = as_values(series)
    if max_lag is None:
        max_lag = default_correlogram_lag(len(x))
    r = acf(x, max_lag)
    pac, _ = durbin_levinson(r)
    return Correlogram(max_lag, r, pac, confidence_bound(len(x)))


def _cutoff(values, bound, cap):
    k = 0
    for v in values:
        if abs(v) > bound and k < cap:
            k += 1
        else:
            break
    return k


def suggest_order(cg: Correlogram, cap: int = MAX_SUGGESTED_ORDER) -> tuple[int, int]:
    """Read (p, q) off a correlogram.

    p counts the leading PACF lags outside the band, q the leading ACF lags
    (lag 0 excluded); both stop at the first lag inside the band and are
    capped at ``cap``.
    """
    p = _cutoff(cg.pacf, cg.confidence_bound, cap)
    q = _cutoff(cg.acf[1:], cg.confidence_bound, cap)
    return p, q


# --------------------------------------------------------------------------
# Augmented Dickey-Fuller


def schwert_max_lag(n: int) -> int:
    return int(math.floor(12.0 * (n / 100.0) ** 0.25))


def _ols(y, X):
    """Least squares returning (beta, rss, stderr of each coefficient)."""
    XtX = X.T @ X
    if np.linalg.matrix_rank(X) < X.shape[1]:
        raise NumericalError("singular regression matrix")
    beta = np.linalg.solve(XtX, X.T @ y)
    resid = y - X @ beta
    rss = float(resid @ resid)
    dof = X.shape[0] - X.shape[1]
    if dof <= 0:
        raise NumericalError("regression has no residual degrees of freedom")
    cov = rss / dof * np.linalg.inv(XtX)
    return beta, rss, np.sqrt(np.clip(np.diag(cov), 0.0, None))


def _adf_design(x, k, start):
    """Regression of dx[t] on [1, x[t], dx[t-1..t-k]] for t >= start."""
    dx = np.diff(x)
    t = np.arange(start, len(dx))
    cols = [np.ones(len(t)), x[t]]
    for i in range(1, k + 1):
        cols.append(dx[t - i])
    return dx[t], np.column_stack(cols)


def adf_test(series, max_lag: int | None = None, level: str = "5%") -> AdfResult:
    """Augmented Dickey-Fuller test with a constant and no trend.

    The lag order is chosen by minimum AIC over ``0..max_lag`` on a common
    estimation sample; the statistic is the t-ratio of the lagged level
    coefficient. A perfectly fitting regression (e.g. a linear ramp) carries
    no evidence against the unit root and reports a statistic of 0.
    """
    if level not in ADF_CRITICAL_VALUES:
        raise ConfigError(f"level must be one of {sorted(ADF_CRITICAL_VALUES)}")
    x = as_values(series)
    n = len(x)
    if max_lag is None:
        max_lag = schwert_max_lag(n)
    if n < 20 + max_lag:
        raise InsufficientData(f"ADF with max_lag={max_lag} needs n >= {20 + max_lag}")
    if np.ptp(x) == 0:
        raise DegenerateSeries("the unit-root test is undefined for a constant series")

    best = None
    for k in range(max_lag + 1):
        y, X = _adf_design(x, k, max_lag)
        try:
            beta, rss, se = _ols(y, X)
        except NumericalError:
            if k == 0:
                raise
            continue
        m = len(y)
        aic = m * math.log(rss / m) + 2 * X.shape[1] if rss > 0 else -math.inf
        if best is None or aic < best[0]:
            best = (aic, k, beta, rss, se, y)
    _, k, beta, rss, se, y = best

    if rss <= 1e-20 * float(y @ y) or se[1] == 0:
        stat = 0.0
    else:
        stat = float(beta[1] / se[1])
    crit = dict(ADF_CRITICAL_VALUES)
    return AdfResult(stat, k, crit, level, stat < crit[level], len(y))


def select_differencing(series, max_d: int = 2, level: str = "5%",
                        max_lag: int | None = None):
    """Smallest d in ``0..max_d`` whose differenced series rejects a unit root.

    Returns ``(d, results)`` where ``results`` holds the ADF result for each
    candidate tried. Falls back to ``max_d`` when nothing rejects.
    """
    x = as_values(series)
    results = []
    for d in range(max_d + 1):
        y = np.diff(x, n=d) if d else x
        lag = max_lag if max_lag is not None else schwert_max_lag(len(y))
        lag = min(lag, max(0, len(y) - 20))
        res = adf_test(y, lag, level)
        results.append(res)
        if res.reject_unit_root:
            return d, results
    return max_d, results


def auto_order(series, max_lag: int | None = None, level: str = "5%"):
    """Pick (p, d, q): d from ADF, then (p, q) from the differenced correlogram.

    Returns ``(order, adf_results, correlogram)``.
    """
    x = as_values(series)
    d, results = select_differencing(x, level=level)
    y = np.diff(x, n=d) if d else x
    cg = correlogram(y, max_lag)
    p, q = suggest_order(cg)
    return (p, d, q), results, cg


# --------------------------------------------------------------------------
# Residual checks


def _gamma_series(a, x):
    term = 1.0 / a
    total = term
    ap = a
    for _ in range(10_000):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * 1e-16:
            break
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _gamma_contfrac(a, x):
    # modified Lentz evaluation of the upper incomplete gamma fraction
    tiny = 1e-300
    b = x + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, 10_000):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            break
    return math.exp(-x + a * math.log(x) - math.lgamma(a)) * h


def regularized_gamma_q(a: float, x: float) -> float:
    """Upper regularized incomplete gamma function Q(a, x)."""
    if a <= 0:
        raise ConfigError("shape parameter must be positive")
    if x <= 0:
        return 1.0
    if x < a + 1.0:
        return min(1.0, max(0.0, 1.0 - _gamma_series(a, x)))
    return min(1.0, max(0.0, _gamma_contfrac(a, x)))


def chi2_sf(stat: float, dof: int) -> float:
    """Survival function of the chi-square distribution."""
    return regularized_gamma_q(dof / 2.0, stat / 2.0)


def ljung_box(residuals, h: int = 10, fitted_params: int = 0,
              level: float = 0.05) -> ResidualReport:
    e = as_values(residuals)
    n = len(e)
    if h <= fitted_params:
        raise ConfigError("Ljung-Box needs more lags than fitted parameters")
    if n <= h:
        raise InsufficientData(f"Ljung-Box with h={h} needs more than {h} residuals")
    r = acf(e, h)
    k = np.arange(1, h + 1)
    q_stat = float(n * (n + 2) * np.sum(r[1:] ** 2 / (n - k)))
    dof = h - fitted_params
    p = chi2_sf(q_stat, dof)
    mean = float(e.mean())
    s = float(e.std(ddof=1))
    return ResidualReport(
        residual_mean=mean,
        mean_within_tolerance=abs(mean) < 2.0 * s / math.sqrt(n),
        ljung_box_statistic=q_stat,
        ljung_box_p=p,
        uncorrelated=p > level,
        lags=h,
        dof=dof,
    )
