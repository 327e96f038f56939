"""Naive statistical forecasters used as combination candidates:
moving average, recency-weighted moving average, additive Holt-Winters
smoothing, and ARIMA with optional seasonal terms fitted by conditional
least squares."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DomainError, TrainingError


def ma_forecast(history, window: int) -> float:
    """Arithmetic mean of the last `window` observations."""
    history = np.asarray(history, float)
    if window <= 0 or window > len(history):
        raise DomainError(f"window {window} invalid for {len(history)} points")
    return float(history[-window:].mean())


def wma_forecast(history, window: int, normalized: bool = True) -> float:
    """Recency-weighted mean: weight window-j+1 on the j-th newest value.

    normalized=True (default) rescales the weights to sum to one. The
    un-normalized variant keeps the verbatim scaling
    2*sum((window-j+1)*y) / (window^2 * (window-1)), whose weights sum to
    (window+1)/(window*(window-1)).
    """
    history = np.asarray(history, float)
    if window < 2 or window > len(history):
        raise DomainError(f"window {window} invalid for {len(history)} points")
    tail = history[-window:]                      # oldest -> newest
    raw = np.arange(1, window + 1, dtype=float)   # newest gets `window`
    num = float(np.dot(raw, tail))
    if normalized:
        return num / raw.sum()
    return 2.0 * num / (window ** 2 * (window - 1))


# ---------------------------------------------------------------------------
# additive Holt-Winters

_DEFAULT_GRID = tuple(round(0.1 * k, 1) for k in range(1, 10))


def _ets_run(y: np.ndarray, m: int, alphas, betas, gammas):
    """Run the level/trend/season recursions for a batch of parameters.

    Initialization: level = mean of the first season, trend = the
    difference of the first two season means divided by m, seasonals =
    first-season deviations. Returns final level/trend, the seasonal
    history and the one-step in-sample SSE from t = m on.
    """
    n = len(y)
    a = np.asarray(alphas, float)
    b_ = np.asarray(betas, float)
    g = np.asarray(gammas, float)
    P = len(a)
    first = y[:m].mean()
    level = np.full(P, first)
    trend = np.full(P, (y[m:2 * m].mean() - first) / m)
    s_hist = np.empty((P, n))
    s_hist[:, :m] = y[:m] - first
    sse = np.zeros(P)
    for t in range(m, n):
        s_tm = s_hist[:, t - m]
        err = y[t] - (level + trend + s_tm)
        sse += err * err
        new_level = a * (y[t] - s_tm) + (1.0 - a) * (level + trend)
        new_trend = b_ * (new_level - level) + (1.0 - b_) * trend
        s_hist[:, t] = g * (y[t] - level - trend) + (1.0 - g) * s_tm
        level, trend = new_level, new_trend
    return level, trend, s_hist, sse


def ets_fit_forecast(series, m: int, h: int, params=None,
                     grid=_DEFAULT_GRID):
    """Additive Holt-Winters forecast for horizons 1..h.

    params is an (alpha, beta, gamma) triple of smoothing parameters; if
    omitted they are grid-searched on the one-step in-sample squared
    error. The h-step forecast is level + h*trend + the matching
    seasonal from the last observed season.
    """
    y = np.asarray(series, float)
    if m < 1:
        raise DomainError("season length must be >= 1")
    if len(y) < 2 * m:
        raise DomainError(f"need >= {2 * m} points, got {len(y)}")
    if params is not None:
        combos = [tuple(float(v) for v in params)]
        for v in combos[0]:
            if not 0.0 <= v <= 1.0:
                raise DomainError("smoothing parameters must be in [0, 1]")
    else:
        combos = [(a, b, g) for a in grid for b in grid for g in grid]
    al, be, ga = (np.array(v) for v in zip(*combos))
    level, trend, s_hist, sse = _ets_run(y, m, al, be, ga)
    k = int(np.argmin(sse))
    n = len(y)
    hs = np.arange(1, h + 1)
    season = s_hist[k, n - m + (hs - 1) % m]
    return level[k] + hs * trend[k] + season


# ---------------------------------------------------------------------------
# ARIMA by conditional least squares

@dataclass(frozen=True)
class ArimaSpec:
    """Orders and, after fitting, coefficients of an ARIMA model.

    Seasonal autoregressive/moving-average terms act additively at lags
    that are multiples of m; m = 0 disables the seasonal part.
    """

    p: int = 1
    d: int = 1
    q: int = 1
    P: int = 0
    D: int = 0
    Q: int = 0
    m: int = 0
    phi: tuple = ()
    theta: tuple = ()
    season_phi: tuple = ()
    season_theta: tuple = ()
    mu: float = 0.0
    fitted: bool = False
    loss_history: tuple = field(default=(), repr=False)

    def __post_init__(self):
        for name in ("p", "d", "q", "P", "D", "Q", "m"):
            if getattr(self, name) < 0:
                raise DomainError(f"{name} must be nonnegative")
        if (self.P or self.D or self.Q) and self.m < 2:
            raise DomainError("seasonal orders need a season length m >= 2")

    def ar_lags(self):
        return [i + 1 for i in range(self.p)] + \
            [(i + 1) * self.m for i in range(self.P)]

    def ma_lags(self):
        return [j + 1 for j in range(self.q)] + \
            [(j + 1) * self.m for j in range(self.Q)]


def _difference(y: np.ndarray, spec: ArimaSpec):
    """Apply seasonal then regular differencing; keep every level."""
    levels = [y]
    z = y
    for _ in range(spec.D):
        z = z[spec.m:] - z[:-spec.m]
        levels.append(z)
    for _ in range(spec.d):
        z = z[1:] - z[:-1]
        levels.append(z)
    return z, levels


def _css_loss_grad(z, mu, ar_c, ma_c, ar_lags, ma_lags, t0):
    """Conditional sum-of-squares loss and its analytic gradient.

    Residuals before t0 are fixed at zero; their recursive dependence on
    the coefficients through the moving-average terms is accounted for
    exactly.
    """
    n = len(z)
    n_eff = n - t0
    eps = [0.0] * n
    npar = 1 + len(ar_c) + len(ma_c)
    deps = [[0.0] * n for _ in range(npar)]
    loss = 0.0
    grad = [0.0] * npar
    for t in range(t0, n):
        pred = mu
        for k, lag in enumerate(ar_lags):
            pred += ar_c[k] * z[t - lag]
        for k, lag in enumerate(ma_lags):
            if t - lag >= 0:
                pred += ma_c[k] * eps[t - lag]
        e = z[t] - pred
        eps[t] = e
        loss += e * e
        for pi in range(npar):
            if pi == 0:
                dpred = 1.0
            elif pi <= len(ar_c):
                dpred = z[t - ar_lags[pi - 1]]
            else:
                dpred = eps[t - ma_lags[pi - 1 - len(ar_c)]] \
                    if t - ma_lags[pi - 1 - len(ar_c)] >= 0 else 0.0
            for k, lag in enumerate(ma_lags):
                if t - lag >= 0:
                    dpred += ma_c[k] * deps[pi][t - lag]
            d_e = -dpred
            deps[pi][t] = d_e
            grad[pi] += 2.0 * e * d_e
    return loss / n_eff, [g / n_eff for g in grad], eps


def arima_fit(series, spec: ArimaSpec, max_iter: int = 300,
              grad_tol: float = 1e-8) -> ArimaSpec:
    """Fit coefficients by gradient descent on the CSS objective.

    The series is standardized internally; the location parameter is
    mapped back afterwards. The loss trajectory is strictly
    nonincreasing (backtracking line search) and is stored on the
    returned spec.
    """
    y = np.asarray(series, float)
    z, _ = _difference(y, spec)
    ar_lags = spec.ar_lags()
    ma_lags = spec.ma_lags()
    t0 = max(ar_lags, default=0)
    if len(z) - t0 < max(spec.p + spec.P * spec.m,
                         spec.q + spec.Q * spec.m) + 1 or len(z) <= t0:
        raise DomainError("not enough observations after differencing")
    scale = float(z.std()) or 1.0
    zs = list(z / scale)

    npar = 1 + len(ar_lags) + len(ma_lags)
    beta = [0.0] * npar

    def unpack(b):
        mu = b[0]
        ar_c = b[1:1 + len(ar_lags)]
        ma_c = b[1 + len(ar_lags):]
        return mu, ar_c, ma_c

    loss, grad, _ = _css_loss_grad(zs, *unpack(beta), ar_lags, ma_lags, t0)
    history = [loss]
    step = 0.5
    for _ in range(max_iter):
        gnorm2 = sum(g * g for g in grad)
        if math.sqrt(gnorm2) < grad_tol * (1.0 + abs(loss)):
            break
        while step > 1e-16:
            cand = [b - step * g for b, g in zip(beta, grad)]
            new_loss, new_grad, _ = _css_loss_grad(
                zs, *unpack(cand), ar_lags, ma_lags, t0)
            if new_loss <= loss - 1e-4 * step * gnorm2:
                break
            step *= 0.5
        else:
            break
        beta, loss, grad = cand, new_loss, new_grad
        history.append(loss)
        step = min(step * 2.0, 1e3)
        if len(history) > 12 and history[-12] - loss < 1e-12 * (1 + loss):
            break
    else:
        # flat MA surfaces stall legitimately; only a clearly nonzero
        # gradient counts as failure to converge
        gnorm = math.sqrt(sum(g * g for g in grad))
        if gnorm > 5e-2 * (1.0 + abs(loss)):
            raise TrainingError(
                f"CSS descent did not converge in {max_iter} iterations "
                f"(loss {loss * scale ** 2:.6g})")

    mu, ar_c, ma_c = unpack(beta)
    phi = tuple(ar_c[:spec.p])
    season_phi = tuple(ar_c[spec.p:])
    theta = tuple(ma_c[:spec.q])
    season_theta = tuple(ma_c[spec.q:])
    if spec.p:
        poly = np.array([1.0] + [-c for c in phi])
        roots = np.roots(poly[::-1])
        if np.any(np.abs(roots) <= 1.0 + 1e-9):
            warnings.warn("fitted AR polynomial is not stationary",
                          RuntimeWarning, stacklevel=2)
    return replace(spec, mu=mu * scale, phi=phi, theta=theta,
                   season_phi=season_phi, season_theta=season_theta,
                   fitted=True,
                   loss_history=tuple(v * scale ** 2 for v in history))


def arima_forecast(fitted: ArimaSpec, series, h: int) -> np.ndarray:
    """Iterated forecast: future shocks zero, differences re-integrated."""
    if not fitted.fitted:
        raise DomainError("spec has no fitted coefficients")
    y = np.asarray(series, float)
    z, levels = _difference(y, fitted)
    ar_lags = fitted.ar_lags()
    ma_lags = fitted.ma_lags()
    ar_c = list(fitted.phi) + list(fitted.season_phi)
    ma_c = list(fitted.theta) + list(fitted.season_theta)
    t0 = max(ar_lags, default=0)

    n = len(z)
    eps = [0.0] * n
    zl = list(z)
    for t in range(t0, n):
        pred = fitted.mu
        for k, lag in enumerate(ar_lags):
            pred += ar_c[k] * zl[t - lag]
        for k, lag in enumerate(ma_lags):
            if t - lag >= 0:
                pred += ma_c[k] * eps[t - lag]
        eps[t] = zl[t] - pred

    fz = []
    for step in range(h):
        t = n + step
        pred = fitted.mu
        for k, lag in enumerate(ar_lags):
            idx = t - lag
            pred += ar_c[k] * (zl[idx] if idx < n else fz[idx - n])
        for k, lag in enumerate(ma_lags):
            idx = t - lag
            if 0 <= idx < n:
                pred += ma_c[k] * eps[idx]
        fz.append(pred)

    # undo regular differences, then seasonal ones
    fc = np.asarray(fz)
    level_idx = len(levels) - 2
    for _ in range(fitted.d):
        prev = levels[level_idx]
        fc = np.cumsum(fc) + prev[-1]
        level_idx -= 1
    for _ in range(fitted.D):
        prev = levels[level_idx]
        out = np.empty(h)
        for j in range(h):
            base = prev[len(prev) + j - fitted.m] if j < fitted.m \
                else out[j - fitted.m]
            out[j] = fc[j] + base
        fc = out
        level_idx -= 1
    return fc
