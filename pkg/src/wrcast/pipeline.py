"""Practical stage 1: glue between the baseline/promotion/festival
estimators and the per-window component matrices the recombiner
consumes.

The baseline forecaster sees spike-cleaned history (promotion and
festival dates interpolated away). The counterfactual baseline for a
past festival date is its cleaned value, which is what the festival
factors average against. Component matrices for a window are forecasts
from that window's history only.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass

import numpy as np

from .causal import (ElasticityModel, FestivalFactor, dml_fit, dml_panel_rows,
                     festival_component, festival_factor_fit,
                     promotion_component)
from .combiner import ComponentMatrix
from .core import ForecastWindow, PanelDataset
from .errors import DataError, DomainError
from .fforma import MetaLearner, fforma_predict, fforma_train, \
    remove_promo_spikes

logger = logging.getLogger(__name__)

STAGE1_COMPONENTS = ("baseline", "promotion", "festival")


@dataclass
class Stage1Model:
    learner: MetaLearner
    elasticity: ElasticityModel
    factors: dict                   # festival level -> FestivalFactor

    def to_json(self) -> str:
        return json.dumps({
            "format": "wrcast-stage1-1",
            "learner": json.loads(self.learner.to_json()),
            "theta": self.elasticity.theta,
            "intercept": self.elasticity.intercept,
            "promo_types": list(self.elasticity.promo_types),
            "factors": {lv: {"beta": f.beta, "n_sources": f.n_sources}
                        for lv, f in self.factors.items()}})

    @staticmethod
    def from_json(text: str) -> "Stage1Model":
        d = json.loads(text)
        if d.get("format") != "wrcast-stage1-1":
            raise DataError("not a serialized stage-1 model")
        learner = MetaLearner.from_json(json.dumps(d["learner"]))
        ela = ElasticityModel(theta=dict(d["theta"]),
                              intercept=float(d["intercept"]),
                              promo_types=tuple(d["promo_types"]),
                              nuisance_outcome=[], nuisance_treatment=[],
                              fold_of_row=np.zeros(0, dtype=int))
        factors = {lv: FestivalFactor(level=lv, beta=f["beta"],
                                      n_sources=int(f["n_sources"]))
                   for lv, f in d["factors"].items()}
        return Stage1Model(learner=learner, elasticity=ela, factors=factors)


def _cleaned_values(panel: PanelDataset, sid: str) -> np.ndarray:
    cov = panel.covariates[sid]
    flags = cov.promo_flags() | cov.festival_flags()
    if flags.all():
        raise DataError(f"series {sid}: every date is flagged")
    return remove_promo_spikes(panel.series[sid].values, flags)


def fit_stage1(panel: PanelDataset, windows, fforma_rounds: int = 50,
               min_meta_windows: int = 20, dml_seed: int = 0) -> Stage1Model:
    """Fit baseline meta-learner, price elasticity and festival factors.

    The meta-learner trains on spike-cleaned copies of the given
    windows; the elasticity on the full panel's (log sales, log price)
    rows; festival factors on past same-level festival dates against
    their cleaned counterfactual.
    """
    cleaned = {sid: _cleaned_values(panel, sid) for sid in panel.ids()}

    clean_windows = []
    for win in windows:
        ts = panel.series[win.series_id]
        lo = int(np.searchsorted(ts.dates, win.hist_dates[0]))
        vals = cleaned[win.series_id][lo:lo + win.T]
        clean_windows.append(ForecastWindow(
            series_id=win.series_id, hist_dates=win.hist_dates,
            hist_values=vals, hist_cov=win.hist_cov,
            future_dates=win.future_dates, future_cov=win.future_cov,
            target=None))
    learner = fforma_train(clean_windows, n_rounds=fforma_rounds,
                           min_windows=min_meta_windows)

    Y, Tr, X, W, promo_types = dml_panel_rows(panel)
    elasticity = dml_fit(Y, Tr, X, W, promo_types=promo_types, seed=dml_seed)

    by_level: dict = {}
    for sid in panel.ids():
        ts = panel.series[sid]
        cov = panel.covariates[sid]
        base = cleaned[sid]
        for i in np.nonzero(cov.festival_flags())[0]:
            if base[i] > 0:
                by_level.setdefault(cov.festival_level[i], []).append(
                    (float(ts.values[i]), float(base[i])))
    factors = {lv: festival_factor_fit(pairs, lv)
               for lv, pairs in sorted(by_level.items())}
    return Stage1Model(learner=learner, elasticity=elasticity,
                       factors=factors)


def stage1_components(model: Stage1Model, panel: PanelDataset,
                      window: ForecastWindow) -> ComponentMatrix:
    """Forecast the three components over a window's future block."""
    sid = window.series_id
    cov_h = window.hist_cov
    flags = cov_h.promo_flags() | cov_h.festival_flags()
    cleaned_hist = remove_promo_spikes(window.hist_values, flags)
    base = fforma_predict(model.learner, cleaned_hist, window.H)

    cov_f = window.future_cov
    promo = promotion_component(model.elasticity, base, cov_f.price,
                                cov_f.reference_price, cov_f.promo_type)
    fest = festival_component(model.factors, base, cov_f.festival_level)
    return ComponentMatrix(STAGE1_COMPONENTS,
                           np.stack([base, promo, fest]))


def stage1_for_windows(model: Stage1Model, panel: PanelDataset, windows):
    return [stage1_components(model, panel, w) for w in windows]


def end_window(panel: PanelDataset, sid: str, T: int, H: int
               ) -> ForecastWindow:
    """The window whose future block is the final H dates of a series."""
    ts = panel.series[sid]
    cov = panel.covariates[sid]
    n = len(ts)
    if n < T + H:
        raise DomainError(f"series {sid}: needs {T + H} points, has {n}")
    anchor = n - H - 1
    lo = anchor - T + 1
    return ForecastWindow(
        series_id=sid, hist_dates=ts.dates[lo:anchor + 1],
        hist_values=ts.values[lo:anchor + 1],
        hist_cov=cov.slice(lo, anchor + 1),
        future_dates=ts.dates[anchor + 1:anchor + 1 + H],
        future_cov=cov.slice(anchor + 1, anchor + 1 + H),
        target=ts.values[anchor + 1:anchor + 1 + H])
