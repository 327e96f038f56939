"""Feature-based forecast combination for the baseline component.

For every training window the candidate statistical methods are fitted
on the early part of the history and scored on the held-out tail; a
multi-output boosted scorer then learns to map series features to
method scores, trained with the softmax-weighted loss objective. At
prediction time the softmax of the scores weights the candidates'
forecasts. Promotion-induced spikes are interpolated away beforehand so
the combination targets regular sales only.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass

import numpy as np

from .classical import ArimaSpec, arima_fit, arima_forecast, ets_fit_forecast, \
    ma_forecast, wma_forecast
from .core import quantile_loss_vec
from .errors import DataError, DomainError, WrcastError
from .gbdt import GbdtModel, gbdt_fit, gbdt_predict
from .loess_stl import stl_decompose

logger = logging.getLogger(__name__)

META_FEATURE_NAMES = (
    "length", "mean", "std", "autocorr_lag1", "autocorr_lag7",
    "trend_strength", "seasonal_strength", "skewness", "coef_variation")


def _autocorr(y: np.ndarray, lag: int) -> float:
    n = len(y)
    if n <= lag + 1:
        return 0.0
    c = y - y.mean()
    denom = float(np.dot(c, c))
    if denom <= 0.0:
        return 0.0
    return float(np.dot(c[:-lag], c[lag:]) / denom)


def meta_features(series) -> np.ndarray:
    """Fixed-order feature vector describing one series."""
    y = np.asarray(series, float)
    n = len(y)
    mean = float(y.mean())
    std = float(y.std())
    feats = np.zeros(len(META_FEATURE_NAMES))
    feats[0] = float(n)
    feats[1] = mean
    feats[2] = std
    feats[3] = _autocorr(y, 1)
    feats[4] = _autocorr(y, 7)
    if n >= 14:
        dec = stl_decompose(y, period=7)
        var_r = float(np.var(dec.remainder))
        var_tr = float(np.var(dec.trend + dec.remainder))
        var_sr = float(np.var(dec.seasonal + dec.remainder))
        feats[5] = max(0.0, 1.0 - var_r / var_tr) if var_tr > 0 else 0.0
        feats[6] = max(0.0, 1.0 - var_r / var_sr) if var_sr > 0 else 0.0
    if std > 0:
        feats[7] = float(np.mean(((y - mean) / std) ** 3))
    feats[8] = std / abs(mean) if mean != 0.0 else 0.0
    return feats


def remove_promo_spikes(values, flags) -> np.ndarray:
    """Replace flagged observations by interpolation between unflagged
    neighbors; flagged stretches at either end take the nearest value."""
    y = np.asarray(values, float)
    flags = np.asarray(flags, bool)
    if flags.shape != y.shape:
        raise DomainError("flags misaligned with values")
    if flags.all():
        raise DomainError("every date is flagged; nothing to interpolate from")
    if not flags.any():
        return y.copy()
    pos = np.arange(len(y), dtype=float)
    keep = ~flags
    out = y.copy()
    out[flags] = np.interp(pos[flags], pos[keep], y[keep])
    return out


# ---------------------------------------------------------------------------
# candidate methods

@dataclass(frozen=True)
class CandidateMethod:
    name: str
    min_length: int
    fit_forecast: object            # callable(history, h) -> np.ndarray


def _ma_method(window=7):
    def run(history, h):
        return np.full(h, ma_forecast(history, min(window, len(history))))
    return CandidateMethod("ma", window, run)


def _wma_method(window=7):
    def run(history, h):
        return np.full(h, wma_forecast(history, min(window, len(history))))
    return CandidateMethod("wma", max(2, window), run)


def _ets_method(season=7):
    def run(history, h):
        return ets_fit_forecast(history, m=season, h=h)
    return CandidateMethod("ets", 2 * season, run)


def _arima_method(spec=None):
    spec = spec or ArimaSpec(p=1, d=1, q=1)
    need = max(spec.p + spec.P * spec.m, spec.q + spec.Q * spec.m) \
        + spec.d + spec.D * spec.m + 3

    def run(history, h):
        fitted = arima_fit(history, spec)
        return arima_forecast(fitted, history, h)
    return CandidateMethod("arima", need, run)


def default_methods(ma_window=7, ets_season=7, arima_spec=None):
    """Registry of the four candidates keyed by their stable names."""
    ms = [_ma_method(ma_window), _wma_method(ma_window),
          _ets_method(ets_season), _arima_method(arima_spec)]
    return {m.name: m for m in ms}


# ---------------------------------------------------------------------------
# meta-learner

def _softmax(s: np.ndarray) -> np.ndarray:
    z = s - s.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


@dataclass
class MetaLearner:
    model: GbdtModel
    method_names: tuple
    feature_names: tuple = META_FEATURE_NAMES

    def weights(self, feats: np.ndarray) -> np.ndarray:
        scores = gbdt_predict(self.model, np.atleast_2d(feats))
        return _softmax(scores)

    def to_json(self) -> str:
        return json.dumps({"format": "wrcast-fforma-1",
                           "method_names": list(self.method_names),
                           "feature_names": list(self.feature_names),
                           "model": json.loads(self.model.to_json())})

    @staticmethod
    def from_json(text: str) -> "MetaLearner":
        d = json.loads(text)
        if d.get("format") != "wrcast-fforma-1":
            raise DataError("not a serialized combination meta-learner")
        return MetaLearner(model=GbdtModel.from_json(json.dumps(d["model"])),
                           method_names=tuple(d["method_names"]),
                           feature_names=tuple(d["feature_names"]))


def candidate_loss_table(windows, methods):
    """Per-window features and per-method held-out losses.

    Each window's history is split into a fit part and a validation
    tail of the window's own horizon length; failures get NaN here and
    a large penalty later.
    """
    names = list(methods)
    F = np.zeros((len(windows), len(META_FEATURE_NAMES)))
    L = np.full((len(windows), len(names)), np.nan)
    for i, win in enumerate(windows):
        hist = win.hist_values
        hold = win.H
        fit_part = hist[:-hold]
        val = hist[-hold:]
        if len(fit_part) < 2:
            raise DomainError(
                f"window history {len(hist)} too short for a {hold}-step "
                "validation split")
        F[i] = meta_features(fit_part)
        for j, name in enumerate(names):
            method = methods[name]
            if len(fit_part) < method.min_length:
                logger.warning("window %d: %s needs %d points, has %d",
                               i, name, method.min_length, len(fit_part))
                continue
            try:
                fc = method.fit_forecast(fit_part, hold)
            except WrcastError as exc:
                logger.warning("window %d: %s failed: %s", i, name, exc)
                continue
            L[i, j] = float(np.mean(quantile_loss_vec(val, fc, 0.5)))
    return F, L


def fforma_train(windows, methods=None, n_rounds: int = 100,
                 max_depth: int = 3, learning_rate: float = 0.1,
                 min_leaf: int = 3, min_windows: int = 20) -> MetaLearner:
    """Train the boosted scorer on the candidate loss table.

    The objective is the softmax-weighted sum of per-method losses; its
    per-score gradient is w*(L - sum(w*L)) and the curvature is
    approximated by its diagonal w*(1-w)*L (floored away from zero so
    Newton leaves stay bounded).
    """
    methods = methods or default_methods()
    if len(windows) < min_windows:
        raise DomainError(
            f"need >= {min_windows} training windows, got {len(windows)}")
    F, L = candidate_loss_table(windows, methods)
    finite = np.isfinite(L)
    if not finite.any():
        raise DataError("every candidate method failed on every window")
    penalty = 10.0 * float(L[finite].max()) if (~finite).any() else 0.0
    if (~finite).any():
        logger.warning("penalizing %d failed (window, method) cells with "
                       "loss %.3g", int((~finite).sum()), penalty)
        L = np.where(finite, L, penalty)
    pos = L[L > 0]
    floor = max(1e-9, 1e-3 * float(np.median(pos))) if pos.size else 1e-9

    def objective(S):
        w = _softmax(S)
        per_sample = (w * L).sum(axis=1)
        g = w * (L - per_sample[:, None])
        h = np.maximum(w * (1.0 - w) * L, floor)
        return g, h, float(per_sample.mean())

    model = gbdt_fit(F, None, objective, n_trees=n_rounds,
                     learning_rate=learning_rate, max_depth=max_depth,
                     min_leaf=min_leaf, n_outputs=L.shape[1])
    return MetaLearner(model=model, method_names=tuple(methods))


def fforma_predict(learner: MetaLearner, series, h: int,
                   methods=None) -> np.ndarray:
    """Weighted combination of the candidates fitted on the full history.

    A method that fails at prediction time is excluded and the
    remaining weights are renormalized.
    """
    methods = methods or default_methods()
    y = np.asarray(series, float)
    w = learner.weights(meta_features(y))[0]
    forecasts = np.zeros((len(learner.method_names), h))
    ok = np.zeros(len(learner.method_names), dtype=bool)
    for j, name in enumerate(learner.method_names):
        method = methods[name]
        if len(y) < method.min_length:
            logger.warning("%s needs %d points, has %d; excluded",
                           name, method.min_length, len(y))
            continue
        try:
            forecasts[j] = method.fit_forecast(y, h)
            ok[j] = True
        except WrcastError as exc:
            logger.warning("%s failed at prediction: %s; excluded", name, exc)
    if not ok.any():
        raise DataError("every candidate method failed")
    w = np.where(ok, w, 0.0)
    w = w / w.sum()
    return w @ forecasts
