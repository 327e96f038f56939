"""Synthetic sales panels with known component ground truth.

Real data never reveals the true decomposition, so component-level
accuracy can only be measured here: every generated observation is
baseline + promotion uplift + festival uplift + noise with all three
parts stored. Estimate perturbation applies a per-component
multiplicative bias and lognormal noise to the truth, standing in for
stage-1 error.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .combiner import ComponentMatrix
from .core import Covariates, PanelDataset, TimeSeries
from .errors import ConfigError, DomainError

COMPONENT_NAMES = ("baseline", "promotion", "festival")


@dataclass(frozen=True)
class SynthSpec:
    n_series: int = 50
    length: int = 400
    start_date: str = "2022-01-01"
    # baseline: level * smooth AR(1) modulation * weekly pattern
    level_low: float = 50.0
    level_high: float = 200.0
    ar_coef: float = 0.7
    ar_sigma: float = 0.05
    weekly_amp: float = 0.15
    # promotions: random discount days with a power-law uplift
    promo_frequency: float = 0.12
    discount_low: float = 0.10
    discount_high: float = 0.30
    elasticity: float = -2.0
    # festivals: fixed calendar of one level
    festival_every: int = 45
    festival_level: str = "A"
    festival_uplift: float = 0.6
    # observation noise relative to the series level
    noise_sigma: float = 0.05
    # estimate perturbation: per-component bias and lognormal sigma
    bias: tuple = (1.25, 0.80, 1.00)
    perturb_sigma: tuple = (0.08, 0.08, 0.08)
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.discount_low <= self.discount_high < 1.0:
            raise ConfigError("discounts must lie in (0, 1)")
        if self.noise_sigma < 0 or self.ar_sigma < 0 \
                or any(s < 0 for s in self.perturb_sigma):
            raise ConfigError("sigmas must be nonnegative")
        if len(self.bias) != 3 or len(self.perturb_sigma) != 3:
            raise ConfigError("bias and perturb_sigma are per-component "
                              f"{COMPONENT_NAMES}")


def same_sign_spec(**kw) -> SynthSpec:
    """All components inflated: joint improvement should be impossible."""
    kw.setdefault("bias", (1.25, 1.20, 1.15))
    return SynthSpec(**kw)


@dataclass
class ComponentTruth:
    """True per-date components for every generated series."""

    names: tuple
    dates: np.ndarray
    by_series: dict = field(default_factory=dict)   # sid -> (N, n_days)
    clip_count: int = 0

    def window_truth(self, window) -> np.ndarray:
        """(N, H) slice of the truth at a window's future dates."""
        mat = self.by_series[window.series_id]
        i0 = int(np.searchsorted(self.dates, window.future_dates[0]))
        return mat[:, i0:i0 + window.H]


def generate_panel(spec: SynthSpec):
    """Deterministic panel + truth for the spec's seed."""
    rng = np.random.default_rng(spec.seed)
    n = spec.length
    dates = (np.datetime64(spec.start_date)
             + np.arange(n).astype("timedelta64[D]"))
    series, covs = {}, {}
    truth = ComponentTruth(names=COMPONENT_NAMES, dates=dates)
    weekly = 1.0 + spec.weekly_amp * np.sin(2 * np.pi * np.arange(n) / 7.0)
    for i in range(spec.n_series):
        sid = f"s{i:03d}"
        level = rng.uniform(spec.level_low, spec.level_high)
        mod = np.zeros(n)
        for t in range(1, n):
            mod[t] = spec.ar_coef * mod[t - 1] \
                + rng.normal(0.0, spec.ar_sigma)
        base = np.maximum(level * (1.0 + mod) * weekly, 0.0)

        promo_days = rng.random(n) < spec.promo_frequency
        disc = np.where(promo_days,
                        rng.uniform(spec.discount_low, spec.discount_high, n),
                        0.0)
        promo = np.where(promo_days,
                         base * ((1.0 - disc) ** spec.elasticity - 1.0), 0.0)

        fest_days = np.zeros(n, dtype=bool)
        if spec.festival_every > 0:
            fest_days[spec.festival_every::spec.festival_every] = True
        fest = np.where(fest_days, spec.festival_uplift * base, 0.0)

        noise = rng.normal(0.0, spec.noise_sigma * level, n)
        y = base + promo + fest + noise
        clipped = y < 0
        truth.clip_count += int(clipped.sum())
        y = np.maximum(y, 0.0)

        series[sid] = TimeSeries(sid, dates, y)
        covs[sid] = Covariates(
            price=np.where(promo_days, 1.0 - disc, 1.0),
            reference_price=np.ones(n),
            promo_type=np.where(promo_days, "discount", "none").astype(object),
            festival_level=np.where(fest_days, spec.festival_level,
                                    "none").astype(object))
        truth.by_series[sid] = np.stack([base, promo, fest])
    return PanelDataset(series=series, covariates=covs), truth


def perturb_components(truth: ComponentTruth, windows, bias=None,
                       sigma=None, seed: int = 0):
    """Stage-1 stand-in: estimate = truth * bias_i * lognormal(sigma_i).

    Returns one ComponentMatrix per window, deterministic for the seed.
    Zero truths stay zero (no promotion predicted on non-promo days).
    """
    bias = np.ones(len(truth.names)) if bias is None \
        else np.asarray(bias, float)
    sigma = np.zeros(len(truth.names)) if sigma is None \
        else np.asarray(sigma, float)
    if len(bias) != len(truth.names) or len(sigma) != len(truth.names):
        raise DomainError("bias/sigma must have one entry per component")
    rng = np.random.default_rng(seed)
    out = []
    for win in windows:
        tr = truth.window_truth(win)
        noise = np.exp(rng.normal(0.0, 1.0, tr.shape) * sigma[:, None])
        out.append(ComponentMatrix(truth.names,
                                   tr * bias[:, None] * noise))
    return out
