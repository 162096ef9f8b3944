"""Calendar-day record indicators and the exploratory record diagnostics.

Marks are stored as integers: ``0`` no record, ``1`` record and ``r >= 2`` an
r-tied record (the observation equals the running maximum, which r - 1
earlier weak records already attained). Missing temperatures are NaN and act
as minus infinity, except in the first year, which is a record by definition.
"""
from dataclasses import dataclass, field
import datetime as dt

import numpy as np

from . import kernels

SIGNALS = ("max", "min")
SEED_DAY = 151
JJA_DAYS = tuple(range(152, 244))
ZERO, ONE = 0, 1


def day_of_year(date):
    """Non-leap day-of-year label (29 February has no label)."""
    if date.month == 2 and date.day == 29:
        return None
    return dt.date(2001, date.month, date.day).timetuple().tm_yday


def label_to_month_day(label):
    d = dt.date(2001, 1, 1) + dt.timedelta(days=int(label) - 1)
    return d.month, d.day


@dataclass
class DailyTemperatureSeries:
    """Daily max/min temperatures of one station over the study window.

    ``tmax`` and ``tmin`` have shape (T, n_days) with NaN for missing values,
    indexed by ``years`` and the day-of-year labels in ``days`` (first label
    is the autoregression seed day).
    """

    site_id: str
    x_km: float
    y_km: float
    dist_coast: float
    sx: float | None
    years: np.ndarray
    days: np.ndarray
    tmax: np.ndarray
    tmin: np.ndarray

    def __post_init__(self):
        self.years = np.asarray(self.years, dtype=int)
        self.days = np.asarray(self.days, dtype=int)
        self.tmax = np.asarray(self.tmax, dtype=np.float64)
        self.tmin = np.asarray(self.tmin, dtype=np.float64)
        shape = (len(self.years), len(self.days))
        if self.tmax.shape != shape or self.tmin.shape != shape:
            raise ValueError(f"series {self.site_id}: value arrays must have shape {shape}")
        if self.dist_coast < 0:
            raise ValueError(f"series {self.site_id}: negative distance to coast")
        for arr in (self.tmax, self.tmin):
            if np.isinf(arr).any():
                raise ValueError(f"series {self.site_id}: infinite temperature")

    def values(self, signal):
        return self.tmax if signal == "max" else self.tmin


@dataclass
class RecordPanel:
    """Record marks for all sites, shape (2, T, n_days, n_sites).

    Axis 0 is the signal (max, min); day index 0 is the seed day.
    """

    marks: np.ndarray
    missing: np.ndarray
    site_ids: list
    years: np.ndarray
    days: np.ndarray
    coords: np.ndarray
    dist_coast: np.ndarray
    sx: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def n_sites(self):
        return self.marks.shape[3]

    @property
    def T(self):
        return self.marks.shape[1]

    def signal(self, name):
        return self.marks[SIGNALS.index(name)]

    def jja(self, name):
        """Marks of one signal without the seed day, shape (T, L, n)."""
        return self.signal(name)[:, 1:, :]

    def subset(self, sites):
        sites = np.asarray(sites)
        return RecordPanel(
            marks=self.marks[..., sites],
            missing=self.missing[..., sites],
            site_ids=[self.site_ids[i] for i in sites],
            years=self.years,
            days=self.days,
            coords=self.coords[sites],
            dist_coast=self.dist_coast[sites],
            sx=None if self.sx is None else self.sx[sites],
            meta=dict(self.meta),
        )


def extract_indicators(series, signal):
    """Record marks (T, n_days) of one station and signal."""
    vals = series.values(signal)
    if vals.size == 0:
        raise ValueError(f"series {series.site_id} is empty")
    if vals.shape[0] < 2:
        raise ValueError(f"series {series.site_id} needs at least 2 years")
    return kernels.record_marks(vals)


def marks_from_values(values):
    """Marks for a bare sequence over years (NaN = missing)."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 0:
        raise ValueError("empty series")
    if arr.shape[0] < 2:
        raise ValueError("need at least 2 years")
    col = arr.reshape(arr.shape[0], -1)
    return kernels.record_marks(col).reshape(arr.shape)


def build_panel(series_list):
    """Stack per-station marks into a :class:`RecordPanel`."""
    if not series_list:
        raise ValueError("no series")
    ref = series_list[0]
    for s in series_list[1:]:
        if not (np.array_equal(s.years, ref.years) and np.array_equal(s.days, ref.days)):
            raise ValueError(f"series {s.site_id} is not aligned with {ref.site_id}")
    T, L = len(ref.years), len(ref.days)
    n = len(series_list)
    marks = np.empty((2, T, L, n), dtype=np.int32)
    missing = np.empty((2, T, L, n), dtype=bool)
    for i, s in enumerate(series_list):
        for j, sig in enumerate(SIGNALS):
            marks[j, :, :, i] = extract_indicators(s, sig)
            missing[j, :, :, i] = np.isnan(s.values(sig))
    sx = None
    if all(s.sx is not None for s in series_list):
        sx = np.array([s.sx for s in series_list], dtype=float)
    return RecordPanel(
        marks=marks,
        missing=missing,
        site_ids=[s.site_id for s in series_list],
        years=ref.years.copy(),
        days=ref.days.copy(),
        coords=np.array([[s.x_km, s.y_km] for s in series_list], dtype=float),
        dist_coast=np.array([s.dist_coast for s in series_list], dtype=float),
        sx=sx,
    )


def joint_panel(max_marks, min_marks):
    """Joint marks: 0 if either is 0, else the product of tie counts.

    A value of 1 is a joint record; a value ``r > 1`` is a tie product whose
    success probability is ``1 / r`` once each signal's tie is resolved.
    """
    max_marks = np.asarray(max_marks)
    min_marks = np.asarray(min_marks)
    if max_marks.shape != min_marks.shape:
        raise ValueError(f"shape mismatch {max_marks.shape} vs {min_marks.shape}")
    return np.where((max_marks == 0) | (min_marks == 0), 0, max_marks * min_marks).astype(np.int32)


def success_probability(marks):
    """Probability that each mark resolves to a record (1/r for ties)."""
    marks = np.asarray(marks)
    return np.where(marks >= 2, 1.0 / np.maximum(marks, 1), (marks == 1).astype(float))


def strict(marks):
    """Binary indicators with ties counted as zero (exploratory convention)."""
    return (np.asarray(marks) == 1).astype(np.int8)


def empirical_rate(marks, t):
    """Share of record marks in year ``t`` (1-based) over days and sites.

    ``marks`` has shape (T, L, n) and covers the JJA days only.
    """
    marks = np.asarray(marks)
    if not 1 <= t <= marks.shape[0]:
        raise ValueError(f"year index {t} out of range 1..{marks.shape[0]}")
    return float(strict(marks[t - 1]).mean())


@dataclass(frozen=True)
class ContingencyCounts:
    n00: int
    n01: int
    n10: int
    n11: int

    @property
    def total(self):
        return self.n00 + self.n01 + self.n10 + self.n11


def log_odds_ratio(counts):
    """Log odds ratio with a 0.5 continuity correction on every cell."""
    c = counts
    return float(np.log((c.n00 + 0.5) * (c.n11 + 0.5) / ((c.n10 + 0.5) * (c.n01 + 0.5))))


def _table(a, b):
    a = strict(a).ravel()
    b = strict(b).ravel()
    return ContingencyCounts(
        n00=int(np.sum((a == 0) & (b == 0))),
        n01=int(np.sum((a == 0) & (b == 1))),
        n10=int(np.sum((a == 1) & (b == 0))),
        n11=int(np.sum((a == 1) & (b == 1))),
    )


def concurrence_counts(panel, t):
    """Same-day table of (max, min) marks in year ``t``: ``n_jk``."""
    return _table(panel.jja("max")[t - 1], panel.jja("min")[t - 1])


def persistence_counts(panel, t, current, previous):
    """Table of ``current`` on day l against ``previous`` on day l - 1.

    The returned ``n_jk`` reads: j = current-day mark, k = previous-day mark,
    so :func:`log_odds_ratio` gives the conditional LOR.
    """
    cur = panel.signal(current)[t - 1, 1:, :]
    prev = panel.signal(previous)[t - 1, :-1, :]
    return _table(cur, prev)
