"""Promotion and festival components for the sales decomposition.

The promotion effect comes from a partially linear model estimated by
double machine learning: boosted-tree regressions of log sales and log
price on promotion type and confounders, cross-fitted over two folds,
followed by a linear regression of the outcome residuals on the
treatment residuals interacted with the promotion type. In the log-log
parameterization the coefficient is the price elasticity, so the
component on a promo date is baseline * ((price/reference)^theta - 1).

The festival effect is a per-level relative uplift averaged over past
festivals of the same level, applied multiplicatively to the baseline.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np

from .core import PanelDataset, calendar_fields
from .errors import DomainError, IdentifiabilityError
from .gbdt import GbdtModel, gbdt_fit, gbdt_predict

logger = logging.getLogger(__name__)


@dataclass
class ElasticityModel:
    theta: dict                      # promo type -> elasticity
    intercept: float
    promo_types: tuple
    nuisance_outcome: list           # per-fold GbdtModel
    nuisance_treatment: list
    fold_of_row: np.ndarray

    def elasticity(self, promo_type: str) -> float:
        if promo_type not in self.theta:
            raise DomainError(f"no elasticity for promo type {promo_type!r}")
        return self.theta[promo_type]


def dml_fit(outcome, treatment, promo_onehot, confounders,
            promo_types=None, n_folds: int = 2, seed: int = 0,
            n_trees: int = 100, max_depth: int = 3,
            learning_rate: float = 0.1, min_rows: int = 100) -> ElasticityModel:
    """Cross-fitted partially linear estimation.

    outcome: log sales, treatment: log price, promo_onehot: (n, K)
    indicator matrix, confounders: (n, P). Nuisance predictions for a
    fold always come from models trained on the other fold(s).
    """
    Y = np.asarray(outcome, float)
    Tr = np.asarray(treatment, float)
    X = np.atleast_2d(np.asarray(promo_onehot, float))
    W = np.atleast_2d(np.asarray(confounders, float))
    n = len(Y)
    if not (len(Tr) == len(X) == len(W) == n):
        raise DomainError("misaligned design arrays")
    if n < min_rows:
        raise DomainError(f"need >= {min_rows} rows, got {n}")
    if float(np.var(Tr)) < 1e-12:
        raise IdentifiabilityError("treatment has no variance "
                                   "(all prices equal)")
    K = X.shape[1]
    promo_types = tuple(promo_types) if promo_types is not None \
        else tuple(f"type_{k}" for k in range(K))
    if len(promo_types) != K:
        raise DomainError("promo type names misaligned with one-hot width")

    rng = np.random.default_rng(seed)
    fold = rng.permutation(n) % n_folds
    XW = np.concatenate([X, W], axis=1)
    y_res = np.empty(n)
    t_res = np.empty(n)
    models_y = []
    models_t = []
    for f in range(n_folds):
        test = fold == f
        train = ~test
        my = gbdt_fit(XW[train], Y[train], "squared", n_trees=n_trees,
                      max_depth=max_depth, learning_rate=learning_rate)
        mt = gbdt_fit(XW[train], Tr[train], "squared", n_trees=n_trees,
                      max_depth=max_depth, learning_rate=learning_rate)
        y_res[test] = Y[test] - gbdt_predict(my, XW[test])
        t_res[test] = Tr[test] - gbdt_predict(mt, XW[test])
        models_y.append(my)
        models_t.append(mt)

    design = np.concatenate([np.ones((n, 1)), t_res[:, None] * X], axis=1)
    coef, *_ = np.linalg.lstsq(design, y_res, rcond=None)
    theta = {name: float(coef[1 + k]) for k, name in enumerate(promo_types)}
    return ElasticityModel(theta=theta, intercept=float(coef[0]),
                           promo_types=promo_types,
                           nuisance_outcome=models_y,
                           nuisance_treatment=models_t,
                           fold_of_row=fold)


def dml_panel_rows(panel: PanelDataset):
    """Assemble (Y, Tr, X, W, promo_types) design arrays from a panel.

    Y = log1p(sales), Tr = log(price), X = promo-type one-hot over the
    types present, W = reference price and calendar fields.
    """
    ys, trs, types, wrows = [], [], [], []
    for sid in panel.ids():
        ts = panel.series[sid]
        cov = panel.covariates[sid]
        if np.any(cov.price <= 0):
            raise DomainError(f"series {sid}: nonpositive price")
        year, month, day, weekday = calendar_fields(ts.dates)
        ys.append(np.log1p(np.maximum(ts.values, 0.0)))
        trs.append(np.log(cov.price))
        types.append(cov.promo_type)
        wrows.append(np.column_stack([cov.reference_price, year, month,
                                      day, weekday]))
    Y = np.concatenate(ys)
    Tr = np.concatenate(trs)
    type_col = np.concatenate(types)
    W = np.vstack(wrows)
    promo_types = tuple(sorted(set(type_col.tolist())))
    X = np.column_stack([(type_col == t).astype(float) for t in promo_types])
    return Y, Tr, X, W, promo_types


def promotion_component(model: ElasticityModel, baseline, price,
                        reference_price, promo_type) -> np.ndarray:
    """Multiplicative price uplift on promo dates, zero elsewhere."""
    base = np.asarray(baseline, float)
    price = np.asarray(price, float)
    ref = np.asarray(reference_price, float)
    ptype = np.asarray(promo_type, dtype=object)
    if np.any(price <= 0) or np.any(ref <= 0):
        raise DomainError("prices must be positive")
    out = np.zeros_like(base)
    for i in range(len(base)):
        if ptype[i] == "none":
            continue
        theta = model.theta.get(ptype[i])
        if theta is None:
            logger.warning("unseen promo type %r; contributing 0", ptype[i])
            continue
        out[i] = base[i] * ((price[i] / ref[i]) ** theta - 1.0)
    return out


@dataclass(frozen=True)
class FestivalFactor:
    """Relative uplift of one festival level over the baseline."""

    level: str
    beta: float
    n_sources: int

    def __post_init__(self):
        if self.beta <= -1.0:
            warnings.warn(f"festival factor for {self.level} clamped to -1",
                          RuntimeWarning, stacklevel=2)
            object.__setattr__(self, "beta", -1.0 + 1e-12)


def festival_factor_fit(history, level: str) -> FestivalFactor:
    """Mean of (actual - baseline) / baseline over past same-level
    festivals; beta = 0 with a warning when there is no history."""
    pairs = list(history)
    if not pairs:
        logger.warning("no festival history for level %s; factor 0", level)
        return FestivalFactor(level=level, beta=0.0, n_sources=0)
    ratios = []
    for actual, base in pairs:
        if base <= 0:
            raise DomainError("festival baseline must be positive")
        ratios.append((actual - base) / base)
    return FestivalFactor(level=level, beta=float(np.mean(ratios)),
                          n_sources=len(ratios))


def festival_component(factors, baseline, festival_level) -> np.ndarray:
    """beta * baseline on dates whose level has a factor, zero elsewhere."""
    base = np.asarray(baseline, float)
    levels = np.asarray(festival_level, dtype=object)
    out = np.zeros_like(base)
    for i in range(len(base)):
        lv = levels[i]
        if lv == "none":
            continue
        fac = factors.get(lv)
        if fac is None:
            logger.warning("no factor for festival level %r; contributing 0",
                           lv)
            continue
        out[i] = fac.beta * base[i]
    return out
