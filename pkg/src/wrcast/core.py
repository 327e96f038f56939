"""Data model, CSV ingestion, windowing, and evaluation metrics.

Everything here is an immutable value after construction and every
operation is pure, so callers may evaluate across series in parallel as
long as reductions keep a fixed order.
"""

from __future__ import annotations

import csv
import datetime as dt
import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, DomainError, IntegrityError, SchemaError

logger = logging.getLogger(__name__)

PROMO_TYPES = ("none", "discount", "flash", "threshold", "bundle")
FESTIVAL_LEVELS = ("none", "S", "A", "B", "C")

_DAY = np.timedelta64(1, "D")


def _as_dates(dates) -> np.ndarray:
    arr = np.asarray(dates, dtype="datetime64[D]")
    if arr.ndim != 1:
        raise DataError("dates must be one-dimensional")
    return arr


@dataclass(frozen=True)
class TimeSeries:
    """A single daily series: strictly increasing dates, finite values."""

    series_id: str
    dates: np.ndarray          # datetime64[D]
    values: np.ndarray         # fp64

    def __post_init__(self):
        object.__setattr__(self, "dates", _as_dates(self.dates))
        object.__setattr__(self, "values",
                           np.asarray(self.values, dtype=float))
        if self.dates.shape != self.values.shape:
            raise DataError(
                f"series {self.series_id}: {len(self.dates)} dates vs "
                f"{len(self.values)} values")
        if len(self.dates) == 0:
            raise DataError(f"series {self.series_id}: empty")
        diffs = np.diff(self.dates)
        if np.any(diffs <= np.timedelta64(0, "D")):
            raise IntegrityError(
                f"series {self.series_id}: dates not strictly increasing")
        if not np.all(np.isfinite(self.values)):
            raise DataError(
                f"series {self.series_id}: non-finite values")

    def __len__(self):
        return len(self.values)

    def is_contiguous(self) -> bool:
        return bool(np.all(np.diff(self.dates) == _DAY))


@dataclass(frozen=True)
class Covariates:
    """Per-date covariate columns aligned with one series."""

    price: np.ndarray              # fp64
    reference_price: np.ndarray    # fp64
    promo_type: np.ndarray         # str objects from PROMO_TYPES
    festival_level: np.ndarray     # str objects from FESTIVAL_LEVELS

    @staticmethod
    def default(n: int) -> "Covariates":
        return Covariates(
            price=np.ones(n),
            reference_price=np.ones(n),
            promo_type=np.array(["none"] * n, dtype=object),
            festival_level=np.array(["none"] * n, dtype=object),
        )

    def __len__(self):
        return len(self.price)

    def slice(self, lo: int, hi: int) -> "Covariates":
        return Covariates(self.price[lo:hi], self.reference_price[lo:hi],
                          self.promo_type[lo:hi], self.festival_level[lo:hi])

    def promo_flags(self) -> np.ndarray:
        return np.asarray(self.promo_type != "none", dtype=bool)

    def festival_flags(self) -> np.ndarray:
        return np.asarray(self.festival_level != "none", dtype=bool)


def calendar_fields(dates: np.ndarray):
    """(year, month, day, weekday) integer arrays for datetime64[D] dates."""
    days = dates.astype("datetime64[D]")
    y = days.astype("datetime64[Y]").astype(int) + 1970
    m = days.astype("datetime64[M]").astype(int) % 12 + 1
    d = (days - days.astype("datetime64[M]")).astype(int) + 1
    # 1970-01-01 was a Thursday; Monday=0.
    wd = (days.astype(int) + 3) % 7
    return y, m, d, wd


@dataclass(frozen=True)
class PanelDataset:
    """A collection of series with aligned covariates."""

    series: dict  # series_id -> TimeSeries
    covariates: dict = field(default_factory=dict)  # series_id -> Covariates

    def __post_init__(self):
        for sid, ts in self.series.items():
            if sid != ts.series_id:
                raise IntegrityError(f"key {sid!r} != series_id {ts.series_id!r}")
            cov = self.covariates.get(sid)
            if cov is None:
                self.covariates[sid] = Covariates.default(len(ts))
            elif len(cov) != len(ts):
                raise IntegrityError(
                    f"series {sid}: {len(cov)} covariate rows for "
                    f"{len(ts)} observations")

    def ids(self):
        return sorted(self.series)

    def __len__(self):
        return len(self.series)


@dataclass(frozen=True)
class ForecastWindow:
    """T trailing observations plus H leading covariate rows.

    target holds the H leading observations when available (training);
    None for live forecasting.
    """

    series_id: str
    hist_dates: np.ndarray
    hist_values: np.ndarray
    hist_cov: Covariates
    future_dates: np.ndarray
    future_cov: Covariates
    target: np.ndarray | None = None

    def __post_init__(self):
        if len(self.hist_dates) != len(self.hist_values):
            raise DataError("window history misaligned")
        if self.target is not None and len(self.target) != len(self.future_dates):
            raise DataError("window target misaligned")
        all_dates = np.concatenate([self.hist_dates, self.future_dates])
        if np.any(np.diff(all_dates) != _DAY):
            raise IntegrityError(
                f"window for {self.series_id} has date gaps")

    @property
    def T(self) -> int:
        return len(self.hist_values)

    @property
    def H(self) -> int:
        return len(self.future_dates)


def make_windows(ds: PanelDataset, T: int, H: int, samples_per_series: int,
                 seed: int, with_target: bool = True):
    """Sample forecast windows uniformly without replacement.

    Anchors (index of the last history point) are drawn per series from
    all admissible positions. Deterministic given the seed; series are
    visited in sorted id order, too-short series are skipped with a
    warning.
    """
    if T < 1 or H < 1 or samples_per_series < 1:
        raise DomainError("T, H and samples_per_series must be positive")
    rng = np.random.default_rng(seed)
    windows = []
    for sid in ds.ids():
        ts = ds.series[sid]
        cov = ds.covariates[sid]
        n = len(ts)
        if n < T + H or not ts.is_contiguous():
            logger.warning("series %s skipped: needs %d contiguous points, "
                           "has %d", sid, T + H, n)
            continue
        anchors = np.arange(T - 1, n - H)
        k = min(samples_per_series, len(anchors))
        chosen = np.sort(rng.choice(anchors, size=k, replace=False))
        for a in chosen:
            lo, hi = a - T + 1, a + 1
            windows.append(ForecastWindow(
                series_id=sid,
                hist_dates=ts.dates[lo:hi],
                hist_values=ts.values[lo:hi],
                hist_cov=cov.slice(lo, hi),
                future_dates=ts.dates[hi:hi + H],
                future_cov=cov.slice(hi, hi + H),
                target=ts.values[hi:hi + H] if with_target else None,
            ))
    return windows


# ---------------------------------------------------------------------------
# metrics

def quantile_loss(y: float, yhat: float, p: float) -> float:
    """p*max(0, y-yhat) + (1-p)*max(0, yhat-y)."""
    if not 0.0 < p < 1.0:
        raise DomainError(f"quantile p={p} outside (0, 1)")
    return p * max(0.0, y - yhat) + (1.0 - p) * max(0.0, yhat - y)


def quantile_loss_vec(y, yhat, p: float):
    if not 0.0 < p < 1.0:
        raise DomainError(f"quantile p={p} outside (0, 1)")
    y = np.asarray(y, dtype=float)
    yhat = np.asarray(yhat, dtype=float)
    diff = y - yhat
    return p * np.maximum(0.0, diff) + (1.0 - p) * np.maximum(0.0, -diff)


def rmse(pairs, median_variant: bool = False) -> float:
    """Root of the average squared error over (y, yhat) pairs.

    median_variant replaces the average with a median, for cross-checks
    against the metric's name rather than its printed definition.
    """
    arr = np.asarray(list(pairs), dtype=float)
    if arr.size == 0:
        raise DomainError("rmse of an empty list")
    sq = (arr[:, 0] - arr[:, 1]) ** 2
    agg = np.median(sq) if median_variant else np.mean(sq)
    return float(math.sqrt(agg))


def p50_ql(per_sample, conventional: bool = False) -> float:
    """Aggregate horizon-sum error, normalized by predicted totals.

    per_sample holds (sum_yhat_over_H, sum_y_over_H) pairs. The default
    is sum|sum_yhat - sum_y| / (2 * sum|sum_yhat|); the conventional
    variant divides by sum|sum_y| without the factor 2.
    """
    arr = np.asarray(list(per_sample), dtype=float)
    if arr.size == 0:
        raise DomainError("p50_ql of an empty list")
    shat, sy = arr[:, 0], arr[:, 1]
    num = np.sum(np.abs(shat - sy))
    if conventional:
        denom = np.sum(np.abs(sy))
        if denom <= 0:
            raise DomainError("p50_ql denominator is zero")
        return float(num / denom)
    denom = 2.0 * np.sum(np.abs(shat))
    if denom <= 0:
        raise DomainError("p50_ql denominator is zero")
    return float(num / denom)


@dataclass(frozen=True)
class MetricReport:
    metric_name: str
    value: float
    group_keys: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.metric_name not in ("quantile_loss", "rmse", "p50_ql"):
            raise DomainError(f"unknown metric {self.metric_name!r}")
        if self.value < 0 or not math.isfinite(self.value):
            raise DomainError(f"metric value {self.value} invalid")

    def to_json_record(self) -> str:
        return json.dumps({"metric": self.metric_name, "value": self.value,
                           "group_keys": dict(sorted(self.group_keys.items()))})


def reports_to_csv(reports) -> str:
    """Flatten MetricReports to CSV with a union of grouping columns."""
    keys = sorted({k for r in reports for k in r.group_keys})
    lines = [",".join(["metric", "value"] + keys)]
    for r in reports:
        row = [r.metric_name, f"{r.value:.10g}"]
        row += [str(r.group_keys.get(k, "")) for k in keys]
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# ingestion

_REQUIRED = ("series_id", "date", "value")
_OPTIONAL = ("price", "reference_price", "promo_type", "festival_level")


def load_panel_csv(path, schema: dict | None = None) -> PanelDataset:
    """Load the canonical panel CSV.

    Columns: series_id, date, value and optionally price,
    reference_price, promo_type, festival_level. schema maps canonical
    names to the file's column names. Dates must be ISO-8601; series
    must be daily-contiguous with no duplicates; unparseable rows are
    reported with their line numbers.
    """
    schema = schema or {}
    colmap = {name: schema.get(name, name) for name in _REQUIRED + _OPTIONAL}

    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise SchemaError(f"{path}: empty file")
        for name in _REQUIRED:
            if colmap[name] not in reader.fieldnames:
                raise SchemaError(
                    f"{path}: missing required column {colmap[name]!r}")
        have = {name: colmap[name] in reader.fieldnames
                for name in _OPTIONAL}
        rows = []
        bad = []
        for lineno, rec in enumerate(reader, start=2):
            try:
                sid = rec[colmap["series_id"]].strip()
                date = dt.date.fromisoformat(rec[colmap["date"]].strip())
                value = float(rec[colmap["value"]])
                if not math.isfinite(value):
                    raise ValueError("non-finite value")
                price = float(rec[colmap["price"]]) if have["price"] else 1.0
                ref = (float(rec[colmap["reference_price"]])
                       if have["reference_price"] else 1.0)
                promo = (rec[colmap["promo_type"]].strip() or "none"
                         if have["promo_type"] else "none")
                fest = (rec[colmap["festival_level"]].strip() or "none"
                        if have["festival_level"] else "none")
                if promo not in PROMO_TYPES:
                    raise ValueError(f"promo_type {promo!r} not in vocabulary")
                if fest not in FESTIVAL_LEVELS:
                    raise ValueError(f"festival_level {fest!r} not in vocabulary")
            except (KeyError, ValueError, AttributeError) as exc:
                bad.append((lineno, str(exc)))
                continue
            rows.append((sid, date, value, price, ref, promo, fest))
    if bad:
        detail = "; ".join(f"line {ln}: {msg}" for ln, msg in bad[:10])
        raise DataError(f"{path}: {len(bad)} unparseable row(s): {detail}")

    by_series: dict = {}
    seen = {}
    for i, row in enumerate(rows):
        key = (row[0], row[1])
        if key in seen:
            raise IntegrityError(
                f"{path}: duplicate (series_id, date) {key} at data row "
                f"{i + 1} (first at row {seen[key] + 1})")
        seen[key] = i
        by_series.setdefault(row[0], []).append(row)

    series = {}
    covs = {}
    for sid, srows in by_series.items():
        srows.sort(key=lambda r: r[1])
        dates = np.array([r[1] for r in srows], dtype="datetime64[D]")
        gaps = np.nonzero(np.diff(dates) != _DAY)[0]
        if gaps.size:
            raise IntegrityError(
                f"{path}: series {sid} has a date gap after {dates[gaps[0]]}")
        series[sid] = TimeSeries(sid, dates,
                                 np.array([r[2] for r in srows]))
        covs[sid] = Covariates(
            price=np.array([r[3] for r in srows], dtype=float),
            reference_price=np.array([r[4] for r in srows], dtype=float),
            promo_type=np.array([r[5] for r in srows], dtype=object),
            festival_level=np.array([r[6] for r in srows], dtype=object),
        )
    return PanelDataset(series=series, covariates=covs)


def load_electricity_csv(path, n_clients: int | None = None,
                         trim_leading_zeros: bool = True) -> PanelDataset:
    """Load a 15-minute electricity export and aggregate to daily sums.

    Expected layout: ';'-separated, decimal commas, first column a
    timestamp, remaining columns one per client. Readings are average kW
    over the quarter hour; the daily value is their sum / 4 (kWh).
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh, delimiter=";")
        header = next(reader)
        clients = [c.strip('"') for c in header[1:]]
        if n_clients is not None:
            clients = clients[:n_clients]
        ncol = len(clients)
        if ncol == 0:
            raise SchemaError(f"{path}: no client columns")
        day_keys = []
        day_rows = {}
        for rec in reader:
            stamp = rec[0].strip('"')
            day = stamp[:10]
            if day not in day_rows:
                day_rows[day] = np.zeros(ncol)
                day_keys.append(day)
            vals = [float(v.replace(",", ".")) if v else 0.0
                    for v in rec[1:ncol + 1]]
            day_rows[day] += np.asarray(vals)

    dates = np.array(day_keys, dtype="datetime64[D]")
    order = np.argsort(dates)
    dates = dates[order]
    mat = np.stack([day_rows[day_keys[i]] for i in order]) / 4.0

    series = {}
    for j, cid in enumerate(clients):
        vals = mat[:, j]
        lo = 0
        if trim_leading_zeros:
            nz = np.nonzero(vals > 0)[0]
            if nz.size == 0:
                logger.warning("client %s has no load; skipped", cid)
                continue
            lo = int(nz[0])
        series[cid] = TimeSeries(cid, dates[lo:], vals[lo:])
    return PanelDataset(series=series)
