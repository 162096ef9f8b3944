"""Summary statistics of posterior-predictive record draws.

Every statistic is first computed per draw (shape (n_draws, ...)) and then
reduced to a posterior mean and pointwise 5% / 95% quantiles (linear
interpolation between order statistics, numpy's default method).
"""
from dataclasses import dataclass, field

import numpy as np

from . import coreg
from .records import label_to_month_day

SIGNALS = ("max", "min", "joint")


def quantiles(values, probs=(0.05, 0.95)):
    """Type-7 quantiles over the leading (draw) axis."""
    return np.quantile(np.asarray(values, dtype=np.float64), probs, axis=0, method="linear")


@dataclass
class SurfaceFrame:
    """Per-cell posterior mean and 90% band of a named statistic."""

    stat: str
    mean: np.ndarray
    q05: np.ndarray
    q95: np.ndarray
    cell_ids: list
    coords: np.ndarray
    meta: dict = field(default_factory=dict)

    @classmethod
    def from_draws(cls, stat, values, grid, **meta):
        values = np.asarray(values, dtype=np.float64)
        lo, hi = quantiles(values)
        return cls(stat, values.mean(axis=0), lo, hi, list(grid.cell_ids), grid.coords, dict(meta))

    def rows(self):
        """Rows ``(cell_id, x_km, y_km, stat, mean, q05, q95)``."""
        return [(cid, float(x), float(y), self.stat, float(m), float(a), float(b))
                for cid, (x, y), m, a, b in zip(self.cell_ids, self.coords, self.mean,
                                                 self.q05, self.q95)]


def summarize_series(stat, ts, values):
    """Rows ``(t, stat, mean, q05, q95)`` for per-draw values of shape (n_draws, len(ts))."""
    values = np.asarray(values, dtype=np.float64)
    lo, hi = quantiles(values)
    mean = values.mean(axis=0)
    return [(int(t), stat, float(m), float(a), float(b)) for t, m, a, b in zip(ts, mean, lo, hi)]


def _indicators(draws, signal):
    if signal == "max":
        return draws.ind[:, :, 0]
    if signal == "min":
        return draws.ind[:, :, 1]
    if signal == "joint":
        return draws.joint_ind()
    raise ValueError(f"signal must be one of {SIGNALS}")


def _probabilities(draws, signal):
    if signal == "joint":
        return draws.joint_prob()
    return draws.prob[:, :, SIGNALS.index(signal)]


def n_stat(draws, t1, t2, l1, l2, signal="max"):
    """Records per day in years t1..t2 and days l1..l2: (n_draws, n_cells)."""
    ys = draws.year_slice(t1, t2)
    ds = draws.day_slice(l1, l2)
    ind = _indicators(draws, signal)[:, ys][:, :, ds]
    return ind.sum(axis=(1, 2), dtype=np.float64) / ds.size


def harmonic_span(t1, t2):
    """Expected records per day under stationarity, sum of 1/t over t1..t2."""
    if t1 > t2 or t1 < 1:
        raise ValueError("need 1 <= t1 <= t2")
    return float(np.sum(1.0 / np.arange(t1, t2 + 1)))


def r_stat(draws, t1, t2, l1, l2, signal="max"):
    """n_stat relative to its stationary expectation."""
    return n_stat(draws, t1, t2, l1, l2, signal) / harmonic_span(t1, t2)


def ers(draws, t, l, cells=None, signal="max"):
    """Share of block cells recording on day l of year t, per draw."""
    y = draws.year_slice(t, t)[0]
    d = draws.day_slice(l, l)[0]
    ind = _indicators(draws, signal)[:, y, d].astype(np.float64)
    return coreg.block_average(ind, cells)


def ers_series(draws, t, cells=None, signal="max"):
    """ERS for every simulated day of year t: (n_draws, n_days)."""
    y = draws.year_slice(t, t)[0]
    ind = _indicators(draws, signal)[:, y].astype(np.float64)
    return coreg.block_average(ind, cells)


def jaccard_prob(p_max, p_min):
    """Joint-record share of the union under conditional independence."""
    both = p_max * p_min
    return both / (p_max + p_min - both)


def jaccard_surface(draws, t1, t2):
    """Period-averaged Jaccard index per draw and cell: (n_draws, n_cells)."""
    ys = draws.year_slice(t1, t2)
    j = jaccard_prob(draws.prob[:, ys, 0], draws.prob[:, ys, 1])
    return j.mean(axis=(1, 2))


def signed_probability(a, b):
    """P(a > b) - P(a < b) over draws (ties count for neither)."""
    return np.mean(np.sign(np.asarray(a, float) - np.asarray(b, float)), axis=0)


def nmax_vs_nmin_prob(draws, t1, t2, l1, l2):
    """P(more max records than min records) minus the reverse, per cell."""
    return signed_probability(n_stat(draws, t1, t2, l1, l2, "max"),
                              n_stat(draws, t1, t2, l1, l2, "min"))


def joint_change_prob(draws, t1, t2, l1, l2):
    """P(more joint records in t1..t2 than in the preceding equal span) minus the reverse."""
    span = t2 - t1 + 1
    if span < 1:
        raise ValueError("empty year range")
    if t1 - span < 2:
        raise ValueError(f"preceding period {t1 - span}..{t1 - 1} starts before year 2")
    now = n_stat(draws, t1, t2, l1, l2, "joint")
    before = n_stat(draws, t1 - span, t1 - 1, l1, l2, "joint")
    return signed_probability(now, before)


def persistence_ratio(draws, t, cells=None, current="min", previous="max"):
    """P(current_l = 1 | previous_{l-1} = 1) / P(current_l = 1 | previous_{l-1} = 0).

    Frequencies pool days, draws and the selected cells. Returns NaN when a
    conditioning event never occurs or the reference frequency is zero.
    """
    y = draws.year_slice(t, t)[0]
    cur = _indicators(draws, current)[:, y, 1:]
    prev = _indicators(draws, previous)[:, y, :-1]
    if cells is not None:
        cur = cur[..., np.asarray(cells, dtype=np.intp)]
        prev = prev[..., np.asarray(cells, dtype=np.intp)]
    hit = prev == 1
    n1, n0 = hit.sum(), (~hit).sum()
    if n1 == 0 or n0 == 0:
        return float("nan")
    p1 = cur[hit].mean()
    p0 = cur[~hit].mean()
    if p0 == 0:
        return float("nan")
    return float(p1 / p0)


def calendar_export(draws, first_year, cells=None, signal="max", years=None):
    """Posterior-mean ERS per simulated day as rows ``(year, month, day, ers)``."""
    years = draws.years if years is None else np.asarray(years, int)
    rows = []
    for t in years:
        mean = ers_series(draws, int(t), cells, signal).mean(axis=0)
        for label, value in zip(draws.day_labels, mean):
            month, day = label_to_month_day(label)
            rows.append((int(first_year + t - 1), month, day, float(value)))
    return rows
