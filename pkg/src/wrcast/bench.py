"""Experiment runners: interval-size sweep, model comparison, and the
public electricity-load study. Every runner is deterministic given its
seeds, never mutates its inputs, and reports one record per configured
cell (or marks it failed)."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .combiner import (ComponentMatrix, additive_forecast, evaluate_forecasts,
                       normalize_weights, wr_predict, wr_train)
from .core import PanelDataset, load_electricity_csv, make_windows
from .errors import DataError, DomainError, WrcastError
from .loess_stl import stl_decompose, stl_project
from .network import TrainConfig
from .core import ForecastWindow

logger = logging.getLogger(__name__)

ELECTRICITY_HINT = (
    "place the raw 15-minute export at this path; the file is the "
    "ElectricityLoadDiagrams20112014 LD2011_2014.txt export "
    "(https://archive.ics.uci.edu/dataset/321)")


@dataclass
class ExperimentCell:
    model: str
    seed: int | None
    metrics: dict
    alpha: float | None = None
    group: dict = field(default_factory=dict)
    status: str = "ok"
    duration: float = 0.0

    def record(self) -> dict:
        out = {"model": self.model, "alpha": self.alpha, "seed": self.seed,
               "status": self.status, "duration": round(self.duration, 3)}
        out.update({f"metric_{k}": v for k, v in self.metrics.items()})
        out.update(self.group)
        return out


@dataclass
class ExperimentResult:
    name: str
    config: dict
    cells: list
    summary: dict
    metadata: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps({"name": self.name, "config": self.config,
                           "summary": self.summary,
                           "cells": [c.record() for c in self.cells],
                           "metadata": self.metadata}, indent=2)

    def cells_csv(self) -> str:
        keys = sorted({k for c in self.cells for k in c.record()})
        lines = [",".join(keys)]
        for c in self.cells:
            rec = c.record()
            lines.append(",".join(str(rec.get(k, "")) for k in keys))
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class BenchConfig:
    """Desk-scale defaults; the full suite stays in the minutes range."""

    T: int = 28
    H: int = 7
    samples_per_series: int = 8
    window_seed: int = 3
    perturb_seed: int = 7
    epochs: int = 30
    batch_size: int = 32
    learning_rate: float = 1e-3
    hidden: int = 32
    split_fraction: float = 0.75

    def train_config(self, seed: int) -> TrainConfig:
        return TrainConfig(learning_rate=self.learning_rate,
                           batch_size=self.batch_size, epochs=self.epochs,
                           seed=seed)


def split_windows_by_time(windows, fraction: float = 0.75):
    """Train/test split on anchor dates; test anchors are the latest."""
    if not windows:
        raise DomainError("no windows to split")
    anchors = np.array([w.hist_dates[-1] for w in windows])
    cut = np.quantile(anchors.astype("datetime64[D]").astype(np.int64),
                      fraction)
    train = [i for i, a in enumerate(anchors)
             if a.astype(np.int64) <= cut]
    test = [i for i, a in enumerate(anchors) if a.astype(np.int64) > cut]
    if not train or not test:
        raise DomainError("degenerate time split; adjust the fraction")
    return train, test


def _median_summary(cells, key="p50_ql"):
    by = {}
    for c in cells:
        if c.status != "ok":
            continue
        by.setdefault((c.model, c.alpha), []).append(c.metrics[key])
    return {f"{m}|alpha={a}": float(np.median(v))
            for (m, a), v in sorted(by.items(), key=lambda kv: str(kv[0]))}


def run_alpha_sweep(windows, components, alphas, seeds,
                    cfg: BenchConfig = BenchConfig()) -> ExperimentResult:
    """Train the recombiner once per (alpha, seed); report medians.

    The alpha = 0 rows double as the plain-addition-plus-residual
    reference: their weights are pinned at one, which is asserted
    against the additive combination on a test window.
    """
    tr_idx, te_idx = split_windows_by_time(windows, cfg.split_fraction)
    wtr = [windows[i] for i in tr_idx]
    ctr = [components[i] for i in tr_idx]
    wte = [windows[i] for i in te_idx]
    cte = [components[i] for i in te_idx]
    n_comp = components[0].n
    cells = []
    for alpha in alphas:
        for seed in seeds:
            t0 = time.time()
            try:
                model = wr_train(wtr, ctr, alpha=alpha,
                                 cfg=cfg.train_config(seed),
                                 hidden=cfg.hidden)
                outs = [wr_predict(model, w, c) for w, c in zip(wte, cte)]
                if alpha == 0.0:
                    w0 = outs[0].weights
                    assert np.all(w0 == 1.0), "alpha=0 weights must be 1"
                    assert np.array_equal(
                        outs[0].modified.sum(axis=0),
                        additive_forecast(cte[0])), \
                        "alpha=0 weighted part must equal plain addition"
                metrics = evaluate_forecasts(wte, [o.yhat for o in outs])
                cells.append(ExperimentCell(
                    model="wr", alpha=float(alpha), seed=seed,
                    metrics=metrics, duration=time.time() - t0))
            except WrcastError as exc:
                logger.warning("sweep cell alpha=%s seed=%s failed: %s",
                               alpha, seed, exc)
                cells.append(ExperimentCell(
                    model="wr", alpha=float(alpha), seed=seed, metrics={},
                    status=f"failed: {exc}", duration=time.time() - t0))
    summary = _median_summary(cells)
    per_alpha = {a: summary.get(f"wr|alpha={float(a)}") for a in alphas}
    finite = {a: v for a, v in per_alpha.items() if v is not None}
    best = min(finite, key=finite.get) if finite else None
    scope = {float(a): [round(1 - a / n_comp, 4),
                        round(1 - a / n_comp + a, 4)] for a in alphas}
    return ExperimentResult(
        name="alpha_sweep",
        config={"alphas": list(map(float, alphas)), "seeds": list(seeds),
                "n_components": n_comp, "T": cfg.T, "H": cfg.H},
        cells=cells,
        summary={"median_p50_ql": {str(a): v for a, v in per_alpha.items()},
                 "best_alpha": None if best is None else float(best),
                 "weight_scope": {str(a): s for a, s in scope.items()}},
        metadata={"n_train_windows": len(wtr), "n_test_windows": len(wte)})


def _component_bias_stats(outputs, truths):
    """Error of modified vs original component estimates against truth.

    Only cells with a nonzero estimate count toward the improvement
    fraction: a zero estimate cannot be changed by reweighting.
    """
    names = outputs[0].component_names
    est_err = {n: [] for n in names}
    mod_err = {n: [] for n in names}
    improved = 0
    counted = 0
    for out, tr in zip(outputs, truths):
        est = out.modified / np.where(out.weights == 0.0, 1.0, out.weights)
        for i, name in enumerate(names):
            e_est = np.abs(est[i] - tr[i])
            e_mod = np.abs(out.modified[i] - tr[i])
            est_err[name].append(e_est)
            mod_err[name].append(e_mod)
            live = est[i] != 0.0
            counted += int(live.sum())
            improved += int((e_mod[live] < e_est[live]).sum())
    stats = {}
    for name in names:
        stats[name] = {
            "mean_abs_err_original": float(np.mean(np.concatenate(est_err[name]))),
            "mean_abs_err_modified": float(np.mean(np.concatenate(mod_err[name])))}
    frac = improved / counted if counted else 0.0
    return stats, frac


def run_model_comparison(windows, components, truth=None, seeds=(0,),
                         cfg: BenchConfig = BenchConfig(),
                         alpha: float = 1.0) -> ExperimentResult:
    """Four-way comparison: recombiner, plain addition, flat MLP
    combiner, and the bare forecaster without components. With truth
    matrices available the component-accuracy statistics are reported
    for the recombiner."""
    tr_idx, te_idx = split_windows_by_time(windows, cfg.split_fraction)
    wtr = [windows[i] for i in tr_idx]
    ctr = [components[i] for i in tr_idx]
    wte = [windows[i] for i in te_idx]
    cte = [components[i] for i in te_idx]
    truth_te = None
    if truth is not None:
        truth_te = [truth.window_truth(w) for w in wte]
    cells = []
    bias_stats = []
    add_metrics = evaluate_forecasts(
        wte, [additive_forecast(c) for c in cte])
    cells.append(ExperimentCell(model="additive", seed=None,
                                metrics=add_metrics))
    for seed in seeds:
        for name, arch, comps in (("wr", "wavenet", True),
                                  ("mlp_combiner", "mlp", True),
                                  ("pure_nn", "wavenet", False)):
            t0 = time.time()
            try:
                model = wr_train(wtr, ctr if comps else None,
                                 alpha=alpha if comps else 0.0,
                                 cfg=cfg.train_config(seed),
                                 hidden=cfg.hidden, arch=arch)
                outs = [wr_predict(model, w, c if comps else None)
                        for w, c in zip(wte, cte)]
                metrics = evaluate_forecasts(wte, [o.yhat for o in outs])
                cells.append(ExperimentCell(
                    model=name, alpha=alpha if comps else None, seed=seed,
                    metrics=metrics, duration=time.time() - t0))
                if name == "wr" and truth_te is not None:
                    stats, frac = _component_bias_stats(outs, truth_te)
                    bias_stats.append({"seed": seed, "per_component": stats,
                                       "improved_fraction": frac})
            except WrcastError as exc:
                logger.warning("comparison cell %s seed=%s failed: %s",
                               name, seed, exc)
                cells.append(ExperimentCell(
                    model=name, seed=seed, metrics={},
                    status=f"failed: {exc}", duration=time.time() - t0))
    summary = {"median_p50_ql": _median_summary(cells)}
    if bias_stats:
        summary["component_bias"] = bias_stats
        summary["median_improved_fraction"] = float(
            np.median([b["improved_fraction"] for b in bias_stats]))
    return ExperimentResult(
        name="model_comparison",
        config={"alpha": alpha, "seeds": list(seeds), "T": cfg.T, "H": cfg.H},
        cells=cells, summary=summary,
        metadata={"n_train_windows": len(wtr), "n_test_windows": len(wte)})


# ---------------------------------------------------------------------------
# public electricity study

def _stl_window_components(dec, hist_len, start, H, period):
    """Trend/seasonal estimates for a window starting inside the
    decomposed span (in-sample) or right past its end (projected)."""
    n = hist_len
    if start + H <= n:
        trend = dec.trend[start:start + H]
        seasonal = dec.seasonal[start:start + H]
    elif start == n:
        trend, seasonal = stl_project(dec, H, period)
    else:
        raise DomainError("window straddles the decomposition boundary")
    return ComponentMatrix(("trend", "seasonal"),
                           np.stack([trend, seasonal]))


def run_public_electricity(path, n_clients: int = 10,
                           anchors=("2014-06-01", "2014-07-01", "2014-08-01"),
                           T: int = 60, period: int = 12,
                           alphas=(1.0,), seeds=(0,),
                           samples_per_client: int = 24,
                           cfg: BenchConfig = BenchConfig()) -> ExperimentResult:
    """Forecast a month ahead for a client subset from three anchors.

    Stage 1 is the seasonal-trend decomposition of each client's
    pre-anchor history: in-sample values feed the training windows and
    the forward projection feeds the forecast window. Compared models:
    the recombiner per alpha, the projected decomposition sum, and the
    bare forecaster."""
    try:
        panel = load_electricity_csv(path, n_clients=n_clients)
    except FileNotFoundError as exc:
        raise DataError(f"{path} not found; {ELECTRICITY_HINT}") from exc
    cells = []
    for anchor_str in anchors:
        anchor = np.datetime64(anchor_str)
        month_end = (anchor.astype("datetime64[M]") + 1).astype("datetime64[D]")
        H = int((month_end - anchor).astype(int))
        train_windows, train_comps = [], []
        test_windows, test_comps = [], []
        rng = np.random.default_rng(cfg.window_seed)
        for sid in panel.ids():
            ts = panel.series[sid]
            cov = panel.covariates[sid]
            hist_end = int(np.searchsorted(ts.dates, anchor))
            if hist_end < T + 2 * period or len(ts) < hist_end + H:
                logger.warning("client %s too short at %s; skipped",
                               sid, anchor_str)
                continue
            dec = stl_decompose(ts.values[:hist_end], period=period)
            lo_anchor = T - 1
            hi_anchor = hist_end - H - 1
            if hi_anchor <= lo_anchor:
                continue
            k = min(samples_per_client, hi_anchor - lo_anchor)
            picks = np.sort(rng.choice(np.arange(lo_anchor, hi_anchor),
                                       size=k, replace=False))
            for a in picks:
                train_windows.append(_slice_window(ts, cov, a, T, H))
                train_comps.append(_stl_window_components(
                    dec, hist_end, a + 1, H, period))
            test_windows.append(_slice_window(ts, cov, hist_end - 1, T, H))
            test_comps.append(_stl_window_components(
                dec, hist_end, hist_end, H, period))
        if not test_windows:
            raise DataError(f"no usable clients at anchor {anchor_str}")
        group = {"anchor": anchor_str}
        stl_metrics = evaluate_forecasts(
            test_windows, [additive_forecast(c) for c in test_comps])
        cells.append(ExperimentCell(model="stl_additive", seed=None,
                                    metrics=stl_metrics, group=dict(group)))
        for seed in seeds:
            for alpha in alphas:
                t0 = time.time()
                model = wr_train(train_windows, train_comps, alpha=alpha,
                                 cfg=cfg.train_config(seed), hidden=cfg.hidden)
                outs = [wr_predict(model, w, c)
                        for w, c in zip(test_windows, test_comps)]
                cells.append(ExperimentCell(
                    model="wr", alpha=float(alpha), seed=seed,
                    metrics=evaluate_forecasts(test_windows,
                                               [o.yhat for o in outs]),
                    group=dict(group), duration=time.time() - t0))
            t0 = time.time()
            bare = wr_train(train_windows, None, alpha=0.0,
                            cfg=cfg.train_config(seed), hidden=cfg.hidden)
            outs = [wr_predict(bare, w, None) for w in test_windows]
            cells.append(ExperimentCell(
                model="pure_nn", seed=seed,
                metrics=evaluate_forecasts(test_windows,
                                           [o.yhat for o in outs]),
                group=dict(group), duration=time.time() - t0))
    summary = {"median_p50_ql": _median_summary(cells)}
    return ExperimentResult(
        name="public_electricity",
        config={"path": str(path), "n_clients": n_clients,
                "anchors": list(anchors), "T": T, "period": period,
                "alphas": list(map(float, alphas)), "seeds": list(seeds)},
        cells=cells, summary=summary)


def _slice_window(ts, cov, anchor_idx, T, H):
    lo = anchor_idx - T + 1
    hi = anchor_idx + 1
    return ForecastWindow(
        series_id=ts.series_id,
        hist_dates=ts.dates[lo:hi], hist_values=ts.values[lo:hi],
        hist_cov=cov.slice(lo, hi),
        future_dates=ts.dates[hi:hi + H], future_cov=cov.slice(hi, hi + H),
        target=ts.values[hi:hi + H])
