"""Locally weighted regression and the seasonal-trend decomposition
built on it: inner loop of cycle-subseries smoothing, low-pass filtering
and trend smoothing, outer loop of robustness reweighting."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateFitError, DomainError


@dataclass(frozen=True)
class LoessConfig:
    q: int                    # neighbor count
    degree: int = 1           # 0, 1 or 2
    robustness: np.ndarray | None = None   # per-point multipliers >= 0

    def __post_init__(self):
        if self.degree not in (0, 1, 2):
            raise DomainError("degree must be 0, 1 or 2")
        if self.q < self.degree + 1:
            raise DomainError(f"q={self.q} too small for degree {self.degree}")
        if self.robustness is not None:
            rob = np.asarray(self.robustness, float)
            if np.any(rob < 0):
                raise DomainError("robustness weights must be nonnegative")
            object.__setattr__(self, "robustness", rob)


def _tricube(u: np.ndarray) -> np.ndarray:
    out = np.zeros_like(u)
    mask = u < 1.0
    c = 1.0 - u[mask] ** 3
    out[mask] = c * c * c
    return out


def _wls_poly(dx, y, w, degree):
    """Weighted polynomial fit on centered abscissae; returns coefficients.

    Reduces the degree when too few points carry weight, so a window
    whose far points got tricube weight zero still yields a stable fit.
    """
    active = w > 0
    n_active = int(active.sum())
    if n_active == 0:
        raise DegenerateFitError("all loess weights are zero")
    deg = min(degree, n_active - 1)
    if deg == 0:
        v = float(np.average(y, weights=w))
        return np.array([v])
    if deg == 1:
        sw = w.sum()
        mx = float(np.dot(w, dx)) / sw
        my = float(np.dot(w, y)) / sw
        cx = dx - mx
        denom = float(np.dot(w, cx * cx))
        if denom <= 0.0:
            return np.array([my])
        slope = float(np.dot(w, cx * (y - my))) / denom
        return np.array([my - slope * mx, slope])
    V = np.vander(dx, deg + 1, increasing=True)
    sq = np.sqrt(w)
    coef, *_ = np.linalg.lstsq(V * sq[:, None], y * sq, rcond=None)
    return coef


def loess_fit_at(points_x, points_y, x0: float, cfg: LoessConfig):
    """Local fit at x0; returns (value, slope)."""
    x = np.asarray(points_x, float)
    y = np.asarray(points_y, float)
    n = len(x)
    if n == 0:
        raise DomainError("no points")
    dist = np.abs(x - x0)
    q_sel = min(cfg.q, n)
    order = np.lexsort((np.arange(n), dist))[:q_sel]
    lam = float(dist[order].max())
    if cfg.q > n:
        lam *= cfg.q / n
    if lam <= 0.0:
        u = np.zeros(q_sel)
    else:
        u = dist[order] / lam
    w = _tricube(u)
    if cfg.robustness is not None:
        w = w * cfg.robustness[order]
    coef = _wls_poly(x[order] - x0, y[order], w, cfg.degree)
    value = float(coef[0])
    slope = float(coef[1]) if len(coef) > 1 else 0.0
    return value, slope


def loess_at(points_x, points_y, x0: float, cfg: LoessConfig) -> float:
    """Tricube-weighted local polynomial regression evaluated at x0."""
    return loess_fit_at(points_x, points_y, x0, cfg)[0]


def _loess_grid(y, q, rob=None, x_eval=None):
    """Degree-1 loess of y over the integer grid, window of q neighbors.

    x_eval defaults to every grid position; returns (values, slopes).
    Exploits the regular spacing: the q nearest neighbors of any point
    form a contiguous index window.
    """
    n = len(y)
    x = np.arange(n, dtype=float)
    q_sel = min(q, n)
    if x_eval is None:
        x_eval = x
    vals = np.empty(len(x_eval))
    slopes = np.empty(len(x_eval))
    half_lo = (q_sel - 1) // 2
    for k, x0 in enumerate(x_eval):
        center = int(round(x0))
        lo = min(max(center - half_lo, 0), n - q_sel)
        hi = lo + q_sel
        # nudge the window while a closer point sits just outside it
        while lo > 0 and abs(x[lo - 1] - x0) < abs(x[hi - 1] - x0):
            lo -= 1
            hi -= 1
        while hi < n and abs(x[hi] - x0) < abs(x[lo] - x0):
            lo += 1
            hi += 1
        dist = np.abs(x[lo:hi] - x0)
        lam = dist.max()
        if q > n:
            lam *= q / n
        u = dist / lam if lam > 0 else np.zeros(q_sel)
        w = _tricube(u)
        if rob is not None:
            w = w * rob[lo:hi]
        if not np.any(w > 0):
            # robustness zeroed the whole window; fall back to distance
            # weights alone so the decomposition stays defined
            w = _tricube(u)
        coef = _wls_poly(x[lo:hi] - x0, y[lo:hi], w, 1)
        vals[k] = coef[0]
        slopes[k] = coef[1] if len(coef) > 1 else 0.0
    return vals, slopes


def _moving_average(y, width):
    if width <= 1:
        return y.copy()
    kernel = np.full(width, 1.0 / width)
    return np.convolve(y, kernel, mode="valid")


def _odd_span(span: int) -> int:
    """Smallest admissible loess window: odd and at least 3."""
    s = max(int(span), 3)
    return s if s % 2 == 1 else s + 1


@dataclass(frozen=True)
class StlResult:
    trend: np.ndarray
    seasonal: np.ndarray
    remainder: np.ndarray
    inner_iterations: int
    outer_iterations: int
    trend_slope: float        # local slope of the final trend fit at the end

    def reconstruct(self) -> np.ndarray:
        return self.trend + self.seasonal + self.remainder


def stl_decompose(series, period: int, seasonal_span: int = 1,
                  trend_span: int = 1, lowpass_span: int = 1,
                  inner_iters: int = 2, outer_iters: int = 1,
                  eps: float = 1e-6) -> StlResult:
    """Seasonal-trend decomposition with robustness reweighting.

    Inner pass: detrend, smooth each cycle subseries (extended one
    period at both ends), remove the low-passed remnant (two moving
    averages of `period`, one of 3, then a loess) to center the
    seasonal, then smooth the deseasonalized series into the trend.
    Outer pass: biweight robustness weights from the remainder. Spans
    below the minimal admissible loess window are promoted to it.
    Deterministic; the remainder is defined by subtraction so the three
    parts always reconstruct the input exactly.
    """
    y = np.asarray(series, float)
    n = len(y)
    if period < 2:
        raise DomainError("period must be >= 2")
    if n < 2 * period:
        raise DomainError(f"need >= {2 * period} points, got {n}")
    q_s = _odd_span(seasonal_span)
    q_t = _odd_span(trend_span)
    q_l = _odd_span(lowpass_span)

    trend = np.zeros(n)
    seasonal = np.zeros(n)
    rob = np.ones(n)
    scale = float(np.mean(np.abs(y))) or 1.0
    inner_done = 0
    outer_done = 0
    slope_end = 0.0

    for outer in range(outer_iters + 1):
        for _ in range(inner_iters):
            prev_trend = trend
            prev_seasonal = seasonal
            detrended = y - trend

            # cycle-subseries smoothing, extended one period both ways
            extended = np.empty(n + 2 * period)
            for phase in range(period):
                idx = np.arange(phase, n, period)
                sub = detrended[idx]
                sub_rob = rob[idx]
                k = len(sub)
                x_eval = np.arange(-1, k + 1, dtype=float)
                vals, _ = _loess_grid(sub, q_s, rob=sub_rob, x_eval=x_eval)
                extended[phase + period * np.arange(k + 2)] = vals

            low = _moving_average(extended, period)
            low = _moving_average(low, period)
            low = _moving_average(low, 3)
            low, _ = _loess_grid(low, q_l)
            seasonal = extended[period:period + n] - low

            deseason = y - seasonal
            trend, slopes = _loess_grid(deseason, q_t, rob=rob)
            slope_end = float(slopes[-1])
            inner_done += 1

            delta = float(np.mean(np.abs(trend - prev_trend))
                          + np.mean(np.abs(seasonal - prev_seasonal)))
            if delta <= eps * scale:
                break
        remainder = y - trend - seasonal
        outer_done = outer
        if outer == outer_iters:
            break
        med = float(np.median(np.abs(remainder)))
        if med <= 0.0:
            rob = np.ones(n)
        else:
            u = np.abs(remainder) / (6.0 * med)
            rob = np.where(u < 1.0, (1.0 - u ** 2) ** 2, 0.0)

    remainder = y - trend - seasonal
    return StlResult(trend=trend, seasonal=seasonal, remainder=remainder,
                     inner_iterations=inner_done, outer_iterations=outer_done,
                     trend_slope=slope_end)


def stl_project(result: StlResult, h: int, period: int):
    """Project the decomposition h steps ahead.

    The trend continues linearly at the last locally fitted slope; the
    seasonal part repeats the last full cycle. Returns (trend_path,
    seasonal_path) arrays of length h.
    """
    if h < 1:
        raise DomainError("h must be positive")
    n = len(result.trend)
    if n < period:
        raise DomainError("decomposition shorter than one period")
    steps = np.arange(1, h + 1, dtype=float)
    trend_path = result.trend[-1] + steps * result.trend_slope
    last_cycle = result.seasonal[n - period:]
    seasonal_path = last_cycle[(np.arange(h)) % period]
    return trend_path, seasonal_path
