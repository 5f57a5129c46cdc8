"""ARIMA(p, d, q) estimation by conditional sum of squares.

The model on the d-times differenced, demeaned series w_t = y_t - mu is

    w_t = sum_i phi_i w_{t-i} - sum_j theta_j a_{t-j} + a_t

with MA terms entering with a minus sign. Coefficients are found by
minimizing the sum of squared recursive residuals with a Nelder-Mead
simplex; inadmissible (non-stationary or non-invertible) points are given an
infinite objective.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .diagnostics import yule_walker
from .errors import (
    ConfigError,
    DomainError,
    FitDiverged,
    InsufficientData,
    NumericalError,
    ParseError,
)
from .series_io import (
    DifferencingRecord,
    TimeSeries,
    as_values,
    difference,
    integrate_values,
)


@dataclass(frozen=True)
class ArimaOrder:
    p: int
    d: int
    q: int

    def __post_init__(self):
        if min(self.p, self.d, self.q) < 0:
            raise ConfigError(f"orders must be non-negative, got {self}")

    def __iter__(self):
        return iter((self.p, self.d, self.q))

    def __str__(self):
        return f"({self.p},{self.d},{self.q})"


@dataclass(frozen=True)
class ArimaModel:
    order: ArimaOrder
    phi: np.ndarray
    theta: np.ndarray
    mu: float
    sigma2: float
    residuals: np.ndarray
    differencing: DifferencingRecord
    # Differenced training series; forecasts continue its recursion.
    differenced: np.ndarray = field(repr=False, default=None)

    @property
    def n_params(self) -> int:
        return self.order.p + self.order.q


@dataclass(frozen=True)
class ForecastResult:
    horizon: int
    point_forecasts: np.ndarray


@dataclass(frozen=True)
class NelderMeadConfig:
    max_iter: int = 1000
    tol: float = 1e-8
    initial_step: float = 0.1


def is_stable(coefs) -> bool:
    """True when all roots of ``1 - c_1 z - ... - c_k z^k`` lie outside the unit circle."""
    c = np.asarray(coefs, dtype=float)
    if c.size == 0:
        return True
    if not np.all(np.isfinite(c)):
        return False
    # trailing zero coefficients lower the degree
    nz = np.flatnonzero(c)
    if nz.size == 0:
        return True
    c = c[: nz[-1] + 1]
    poly = np.concatenate([-c[::-1], [1.0]])  # highest degree first
    roots = np.roots(poly)
    return bool(np.all(np.abs(roots) > 1.0))


def css_residuals(phi, theta, mu, series) -> np.ndarray:
    """Recursive residuals; the first max(p, q) are start-up zeros."""
    phi = [float(v) for v in phi]
    theta = [float(v) for v in theta]
    w = [float(v) - mu for v in as_values(series)]
    p, q = len(phi), len(theta)
    m = max(p, q)
    n = len(w)
    a = [0.0] * n
    for t in range(m, n):
        val = w[t]
        for i in range(p):
            val -= phi[i] * w[t - 1 - i]
        for j in range(q):
            val += theta[j] * a[t - 1 - j]
        a[t] = val
    return np.array(a)


def css_objective(phi, theta, mu, series, admissible_only: bool = False) -> float:
    """Conditional sum of squared residuals over t > max(p, q).

    Non-finite sums come back as +inf. With ``admissible_only`` the value is
    also +inf whenever the AR part is non-stationary or the MA part is
    non-invertible; :func:`fit` minimizes this guarded form.
    """
    if admissible_only and not (is_stable(phi) and is_stable(theta)):
        return math.inf
    n = len(as_values(series))
    m = max(len(phi), len(theta))
    if n <= m:
        raise InsufficientData(f"series of length {n} too short for lag {m}")
    with np.errstate(over="ignore", invalid="ignore"):
        a = css_residuals(phi, theta, mu, series)[m:]
        value = float(a @ a)
    return value if math.isfinite(value) else math.inf


def nelder_mead(objective, start, config: NelderMeadConfig | None = None):
    """Minimize ``objective`` from ``start`` with a Nelder-Mead simplex.

    Uses reflection 1, expansion 2, contraction 0.5 and shrink 0.5. Stops
    when the spread of simplex values and the simplex diameter both fall
    below ``config.tol``, or after ``config.max_iter`` iterations. Returns
    ``(argmin, value)`` for the best point seen.
    """
    cfg = config or NelderMeadConfig()
    x0 = np.atleast_1d(np.asarray(start, dtype=float))
    k = x0.size
    if k < 1:
        raise ConfigError("nelder_mead needs at least one dimension")

    def f(x):
        v = objective(x)
        return v if math.isfinite(v) else math.inf

    simplex = [x0.copy()]
    for i in range(k):
        x = x0.copy()
        x[i] += cfg.initial_step if x[i] == 0 else cfg.initial_step * max(1.0, abs(x[i]))
        simplex.append(x)
    values = [f(x) for x in simplex]

    for _ in range(cfg.max_iter):
        order = np.argsort(values, kind="stable")
        simplex = [simplex[i] for i in order]
        values = [values[i] for i in order]
        best, worst = values[0], values[-1]
        # both the values and the vertices must agree; a symmetric simplex
        # straddling the minimum has equal values but has not converged
        if (math.isfinite(worst) and worst - best < cfg.tol
                and max(np.max(np.abs(x - simplex[0])) for x in simplex[1:]) < cfg.tol):
            break

        centroid = np.mean(simplex[:-1], axis=0)
        xr = centroid + (centroid - simplex[-1])
        fr = f(xr)
        if fr < values[0]:
            xe = centroid + 2.0 * (centroid - simplex[-1])
            fe = f(xe)
            if fe < fr:
                simplex[-1], values[-1] = xe, fe
            else:
                simplex[-1], values[-1] = xr, fr
            continue
        if fr < values[-2]:
            simplex[-1], values[-1] = xr, fr
            continue
        if fr < values[-1]:
            xc = centroid + 0.5 * (xr - centroid)  # outside contraction
            fc = f(xc)
            if fc <= fr:
                simplex[-1], values[-1] = xc, fc
                continue
        else:
            xc = centroid + 0.5 * (simplex[-1] - centroid)  # inside contraction
            fc = f(xc)
            if fc < values[-1]:
                simplex[-1], values[-1] = xc, fc
                continue
        for i in range(1, k + 1):
            simplex[i] = simplex[0] + 0.5 * (simplex[i] - simplex[0])
            values[i] = f(simplex[i])

    i = int(np.argmin(values))
    return simplex[i].copy(), float(values[i])


def fit(series, order: ArimaOrder | tuple) -> ArimaModel:
    """Fit an ARIMA model by conditional sum of squares."""
    if not isinstance(order, ArimaOrder):
        order = ArimaOrder(*order)
    p, d, q = order
    ts = series if isinstance(series, TimeSeries) else TimeSeries.monthly(as_values(series))
    n = len(ts)
    if n < 10 * (p + q + 1) + d:
        raise InsufficientData(
            f"ARIMA{order} needs at least {10 * (p + q + 1) + d} points, got {n}"
        )
    diffed, record = difference(ts, d)
    y = np.array(diffed.values)
    mu = float(y.mean())
    w = y - mu
    m = max(p, q)

    if p + q == 0:
        phi = theta = np.zeros(0)
        resid = w.copy()
    else:
        try:
            phi0 = yule_walker(w, p) if p else np.zeros(0)
        except NumericalError:
            phi0 = np.zeros(p)
        if not is_stable(phi0):
            phi0 = np.zeros(p)
        start = np.concatenate([phi0, np.zeros(q)])

        def objective(params):
            return css_objective(params[:p], params[p:], 0.0, w, admissible_only=True)

        initial = objective(start)
        cfg = NelderMeadConfig(max_iter=200 * (p + q), tol=1e-8)
        best, value = nelder_mead(objective, start, cfg)
        if not math.isfinite(value) or value > initial:
            raise FitDiverged(f"CSS minimization for ARIMA{order} found no admissible optimum")
        phi, theta = best[:p], best[p:]
        resid = css_residuals(phi, theta, 0.0, w)

    css = float(resid[m:] @ resid[m:])
    sigma2 = css / (len(w) - m)
    if not sigma2 > 0:
        # noiseless input; keep the invariant sigma2 > 0
        sigma2 = np.finfo(float).tiny
    return ArimaModel(order, np.array(phi, dtype=float), np.array(theta, dtype=float),
                      mu, sigma2, resid, record, y)


def forecast(model: ArimaModel, horizon: int) -> ForecastResult:
    """Recursive multi-step forecast in the original (undifferenced) units.

    Future innovations are set to their expectation, zero; in-sample
    residuals are used while the MA lags still reach into the sample.
    """
    if horizon < 1:
        raise ConfigError("horizon must be at least 1")
    p, q = len(model.phi), len(model.theta)
    w = list(np.asarray(model.differenced, dtype=float) - model.mu)
    a = list(model.residuals) + [0.0] * horizon
    n = len(w)
    for h in range(horizon):
        t = n + h
        val = 0.0
        for i in range(p):
            val += model.phi[i] * w[t - 1 - i]
        for j in range(q):
            val -= model.theta[j] * a[t - 1 - j]
        w.append(val)
    diff_forecasts = np.array(w[n:]) + model.mu
    full = np.concatenate([np.asarray(model.differenced, dtype=float), diff_forecasts])
    levels = integrate_values(full, model.differencing)
    return ForecastResult(horizon, levels[-horizon:])


def simulate(order: ArimaOrder | tuple, phi, theta, mu: float, sigma: float, n: int,
             seed: int, burn_in: int = 100, start=(2000, 1)) -> TimeSeries:
    """Draw a path from an ARIMA process with Gaussian innovations.

    The ARMA part (with mean ``mu``) is generated with a discarded burn-in
    and then integrated ``d`` times starting from zero.
    """
    if not isinstance(order, ArimaOrder):
        order = ArimaOrder(*order)
    phi = np.asarray(phi, dtype=float)
    theta = np.asarray(theta, dtype=float)
    if len(phi) != order.p or len(theta) != order.q:
        raise DomainError(f"coefficient counts do not match ARIMA{order}")
    if not is_stable(phi):
        raise DomainError("AR coefficients are not stationary")
    if not is_stable(theta):
        raise DomainError("MA coefficients are not invertible")
    if n < 1 or sigma < 0:
        raise DomainError("need n >= 1 and sigma >= 0")
    rng = np.random.default_rng(seed)
    total = n + burn_in
    a = rng.standard_normal(total) * sigma
    w = np.zeros(total)
    for t in range(total):
        val = a[t]
        for i in range(order.p):
            if t - 1 - i >= 0:
                val += phi[i] * w[t - 1 - i]
        for j in range(order.q):
            if t - 1 - j >= 0:
                val -= theta[j] * a[t - 1 - j]
        w[t] = val
    x = w[burn_in:] + mu
    for _ in range(order.d):
        x = np.cumsum(x)
    return TimeSeries.monthly(x, start)


# --------------------------------------------------------------------------
# Serialization


def _fmt(values) -> str:
    return ",".join(f"{float(v):.17g}" for v in values)


def dumps_model(model: ArimaModel) -> str:
    """Flat text form: order, phi, theta, mu, sigma2, then the state needed to forecast."""
    p, d, q = model.order
    lines = [
        f"{p},{d},{q}",
        _fmt(model.phi),
        _fmt(model.theta),
        f"{model.mu:.17g}",
        f"{model.sigma2:.17g}",
        _fmt(s[0] for s in model.differencing.seed_values),
        _fmt(model.differenced),
        _fmt(model.residuals),
    ]
    return "\n".join(lines) + "\n"


def loads_model(text: str) -> ArimaModel:
    lines = text.split("\n")
    if len(lines) < 8:
        raise ParseError("model file is truncated")

    def floats(line):
        return np.array([float(v) for v in line.split(",")]) if line.strip() else np.zeros(0)

    try:
        p, d, q = (int(v) for v in lines[0].split(","))
        phi, theta = floats(lines[1]), floats(lines[2])
        mu, sigma2 = float(lines[3]), float(lines[4])
        seeds = floats(lines[5])
        differenced, residuals = floats(lines[6]), floats(lines[7])
    except ValueError as exc:
        raise ParseError(f"malformed model file: {exc}") from None
    order = ArimaOrder(p, d, q)
    if len(phi) != p or len(theta) != q or len(seeds) != d:
        raise ParseError("coefficient counts do not match the stated order")
    record = DifferencingRecord(d, tuple([s] for s in seeds))
    return ArimaModel(order, phi, theta, mu, sigma2, residuals, record, differenced)
