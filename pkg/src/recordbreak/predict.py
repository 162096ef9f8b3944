"""Posterior-predictive record probabilities and indicators on a grid.

For every selected posterior draw and year the day fields at the fitting
sites are kriged to the grid cells, the coregionalisation is applied and the
indicators are simulated day by day from a seed day whose probabilities come
from the station proportions on that day.
"""
from dataclasses import dataclass

import numpy as np

from . import coreg, design, gp, kernels
from .records import JJA_DAYS, success_probability

SEED_EPS = 0.01
JJA_START = JJA_DAYS[0]


@dataclass
class GridSpec:
    """Prediction cells: centroids (km), distance to coast and covariate x = log(sx)."""

    coords: np.ndarray
    dist_coast: np.ndarray
    x: np.ndarray | None = None
    resolution: float = 25.0
    cell_ids: list | None = None

    def __post_init__(self):
        self.coords = np.asarray(self.coords, dtype=np.float64).reshape(-1, 2)
        self.dist_coast = np.asarray(self.dist_coast, dtype=np.float64)
        if self.dist_coast.shape != (self.coords.shape[0],):
            raise ValueError("one distance to coast per cell is required")
        if np.any(self.dist_coast < 0):
            raise ValueError("distance to coast must be non-negative")
        if not self.resolution > 0:
            raise ValueError("grid resolution must be positive")
        if self.x is not None:
            self.x = np.asarray(self.x, dtype=np.float64)
            if self.x.shape != self.dist_coast.shape:
                raise ValueError("one covariate value per cell is required")
        if self.cell_ids is None:
            self.cell_ids = [f"C{i + 1:05d}" for i in range(self.n_cells)]
        if len(self.cell_ids) != self.n_cells:
            raise ValueError("one identifier per cell is required")

    @property
    def n_cells(self):
        return self.coords.shape[0]

    @classmethod
    def regular(cls, x_range, y_range, resolution, dist_fn=None, x_fn=None):
        """Cell centroids of a regular lattice covering the given box."""
        xs = np.arange(x_range[0] + resolution / 2, x_range[1], resolution)
        ys = np.arange(y_range[0] + resolution / 2, y_range[1], resolution)
        gx, gy = np.meshgrid(xs, ys, indexing="xy")
        coords = np.column_stack([gx.ravel(), gy.ravel()])
        dist = coords[:, 0].copy() if dist_fn is None else np.asarray(dist_fn(coords), float)
        x = None if x_fn is None else np.asarray(x_fn(coords), float)
        return cls(coords, dist, x, float(resolution))


def krige_grid_covariate(grid, station_coords, station_x, decay=gp.DEFAULT_DECAY):
    """Grid covariate values, kriged from the stations where the grid has none."""
    if grid.x is not None:
        return grid.x
    return gp.simple_krige_covariate(station_x, station_coords, grid.coords, decay=decay)


def seed_probabilities(marks, t, missing=None):
    """Station proportion of seed-day records in year ``t`` per signal, clamped.

    ``marks`` has shape (2, T, n_days + 1, n) with the seed day first. Ties
    count with their resolution probability 1/r; missing values are skipped.
    """
    marks = np.asarray(marks)
    if not 1 <= t <= marks.shape[1]:
        raise ValueError(f"year index {t} out of range 1..{marks.shape[1]}")
    day = success_probability(marks[:, t - 1, 0, :])
    have = np.ones(day.shape, dtype=bool) if missing is None else ~np.asarray(missing)[:, t - 1, 0, :]
    counts = have.sum(axis=1)
    if np.any(counts == 0):
        raise ValueError(f"no station has data on the seed day of year {t}")
    p = np.where(have, day, 0.0).sum(axis=1) / counts
    return np.clip(p, SEED_EPS, 1.0 - SEED_EPS)


def seed_day(t, marks, n_cells, rng, missing=None):
    """Seed-day indicators (n_cells, 2) drawn from the clamped station proportions."""
    p = seed_probabilities(marks, t, missing)
    return (rng.random((n_cells, 2)) < p[None, :]).astype(np.int8)


class DrawKriger:
    """Conditional simulation of one draw's day fields (and A(s)) at grid cells.

    The kriging weights depend only on the draw's kernel parameters, so they
    are computed once per draw and reused for every day.
    """

    def __init__(self, draws, chain, index, grid_coords, grid_x=None):
        self.draws = draws
        p = draws.params
        rng_ = p["range"][chain, index]
        rx = p["range_x"][chain, index] if "range_x" in p else None
        obs_x = draws.x if rx is not None else None
        new_x = grid_x if rx is not None else None
        if rx is not None and (obs_x is None or new_x is None):
            raise ValueError("anisotropic prediction needs covariate values at sites and cells")
        self.samplers = []
        for j in range(2):
            kern = gp.KernelSpec(3.0 / rng_[j], None if rx is None else 3.0 / rx[j])
            if j == 1 and draws.variant.bivariate:
                self.samplers.append(self.samplers[0])
            else:
                self.samplers.append(gp.ConditionalSampler(kern, draws.coords, grid_coords,
                                                           obs_x, new_x))
        self.B = p["B"][chain, index]
        if draws.w is None:
            raise ValueError("prediction needs the archived day fields of the fit")
        self.w = draws.w[chain, index]
        self.grid_coords = grid_coords
        self.log_dist_obs = np.log1p(draws.dist_coast)
        if "a_fields" in p:
            self.fields = p["a_fields"][chain, index]
            self.beta_a = p["beta_a"][chain, index]
            self.sigma2_a = p["sigma2_a"][chain, index]
            self.decay_a = draws.prior.sv_decay
        else:
            self.a = p["a"][chain, index]

    def coreg_at(self, grid_log_dist, rng):
        """(a11, a21, a22) at the grid cells for this draw."""
        if not hasattr(self, "fields"):
            return tuple(float(v) for v in self.a)
        z_obs = np.column_stack([np.ones(self.log_dist_obs.size), self.log_dist_obs])
        z_new = np.column_stack([np.ones(grid_log_dist.size), grid_log_dist])
        stored = np.stack([np.log(self.fields[0]), self.fields[1], np.log(self.fields[2])])
        kern = gp.KernelSpec(self.decay_a)
        out = []
        for k in range(3):
            cs = gp.ConditionalSampler(kern, self.draws.coords, self.grid_coords,
                                       mean_obs=z_obs @ self.beta_a[k], mean_new=z_new @ self.beta_a[k],
                                       scale=self.sigma2_a[k])
            out.append(cs.draw(stored[k], rng))
        return np.exp(out[0]), out[1], np.exp(out[2])

    def day_fields(self, t, rng):
        """w at the grid cells for every day of year ``t``: shape (2, L, m)."""
        L = self.draws.n_days
        sl = slice((t - 2) * L, (t - 1) * L)
        out = []
        for j in range(2):
            out.append(self.samplers[j].draw(self.w[j, sl].T, rng).T)
        return np.stack(out)


def krige_day_field(draws, chain, index, t, day, grid, rng, grid_x=None):
    """Conditional draw of (w1, w2) at the grid cells for one day of year ``t``.

    ``day`` counts the modelled days from 1 (the day after the seed day).
    """
    if not 2 <= t <= draws.T:
        raise ValueError(f"day fields exist for years 2..{draws.T}")
    if not 1 <= day <= draws.n_days:
        raise ValueError(f"day must lie in 1..{draws.n_days}")
    dk = DrawKriger(draws, chain, index, grid.coords, grid_x)
    d = (t - 2) * draws.n_days + day - 1
    return np.stack([dk.samplers[j].draw(dk.w[j, d], rng) for j in range(2)])


def simulate_sequential(B, t, log_dist, v, seed, rng):
    """Day-sequential probabilities and indicators of one year.

    Parameters
    ----------
    B : (2, 8) raw-scale coefficients.
    t : year index (>= 2).
    log_dist : (m,) log(1 + distance to coast) of the cells.
    v : (2, L, m) random effects A(s) w.
    seed : (m, 2) seed-day indicators.

    Returns
    -------
    prob, ind : arrays of shape (2, L, m).
    """
    if t < 2:
        raise ValueError("simulation starts in year 2")
    v = np.asarray(v, dtype=np.float64)
    _, L, m = v.shape
    u = rng.random((L, m, 2))
    prob, ind = kernels.simulate_days(np.asarray(B, float), np.ascontiguousarray(seed, dtype=np.int8),
                                      np.asarray(log_dist, float), float(design.trend_covariate(t)),
                                      np.ascontiguousarray(v.transpose(1, 2, 0)), u)
    return prob.transpose(2, 0, 1), ind.transpose(2, 0, 1)


@dataclass
class PredictiveDraws:
    """Predictive probabilities and indicators on a grid.

    ``prob`` and ``ind`` have shape (n_draws, n_years, 2, L, m) for the years
    in ``years`` (1-based indices) and the modelled days (seed day excluded).
    """

    prob: np.ndarray
    ind: np.ndarray
    years: np.ndarray
    grid: GridSpec
    draw_ids: np.ndarray | None = None
    day_labels: np.ndarray | None = None

    def __post_init__(self):
        if self.day_labels is None:
            self.day_labels = JJA_START + np.arange(self.prob.shape[3])
        self.day_labels = np.asarray(self.day_labels, int)
        self.years = np.asarray(self.years, int)

    @property
    def n_draws(self):
        return self.prob.shape[0]

    def day_slice(self, l1, l2):
        """Positions of day labels l1..l2 (inclusive)."""
        if l1 > l2:
            raise ValueError("empty day range")
        pos = np.flatnonzero((self.day_labels >= l1) & (self.day_labels <= l2))
        if pos.size != l2 - l1 + 1:
            raise ValueError(f"days {l1}..{l2} not all simulated")
        return pos

    def year_slice(self, t1, t2):
        """Positions of years t1..t2 (inclusive) in ``years``."""
        if t1 > t2:
            raise ValueError("empty year range")
        pos = np.flatnonzero((self.years >= t1) & (self.years <= t2))
        if pos.size != t2 - t1 + 1:
            raise ValueError(f"years {t1}..{t2} not all simulated")
        return pos

    def joint_prob(self):
        return self.prob[:, :, 0] * self.prob[:, :, 1]

    def joint_ind(self):
        return self.ind[:, :, 0] * self.ind[:, :, 1]


def select_draws(draws, n_draws):
    """(chain, index) pairs spread evenly over the pooled draws."""
    total = draws.n_chains * draws.n_draws
    n_draws = min(int(n_draws), total)
    pooled = np.linspace(0, total - 1, n_draws).round().astype(int)
    return np.column_stack([pooled // draws.n_draws, pooled % draws.n_draws])


def predict_grid(draws, grid, marks, rng, n_draws=100, years=None, missing=None,
                 station_x=None, day_labels=None):
    """Posterior-predictive simulation on ``grid`` for the selected years.

    ``marks`` is the fitted (2, T, n_days + 1, n) panel used for seed days.
    Seeds and kriged fields are redrawn for every (draw, year).
    """
    T, L = draws.T, draws.n_days
    years = np.arange(2, T + 1) if years is None else np.asarray(years, int)
    if years.size == 0 or years.min() < 2 or years.max() > T:
        raise ValueError(f"years must lie in 2..{T}")
    grid_x = grid.x
    if "range_x" in draws.params and grid_x is None:
        sx = draws.x if station_x is None else station_x
        if sx is None:
            raise ValueError("anisotropic prediction needs sx at the stations or the cells")
        grid_x = krige_grid_covariate(grid, draws.coords, sx)
    picks = select_draws(draws, n_draws)
    m = grid.n_cells
    log_dist = np.log1p(grid.dist_coast)
    prob = np.empty((len(picks), years.size, 2, L, m))
    ind = np.empty((len(picks), years.size, 2, L, m), dtype=np.int8)
    for b, (c, i) in enumerate(picks):
        dk = DrawKriger(draws, c, i, grid.coords, grid_x)
        a11, a21, a22 = dk.coreg_at(log_dist, rng)
        for k, t in enumerate(years):
            w = dk.day_fields(t, rng)
            v = coreg.apply(a11, a21, a22, w)
            seed = seed_day(t, marks, m, rng, missing)
            prob[b, k], ind[b, k] = simulate_sequential(dk.B, t, log_dist, v, seed, rng)
    return PredictiveDraws(prob=prob, ind=ind, years=years, grid=grid,
                           draw_ids=picks, day_labels=day_labels)


def stationary_predictive(T, n_days, grid, n_draws, rng, years=None):
    """Predictive draws of the stationary model: p = 1/t, independent indicators."""
    years = np.arange(2, T + 1) if years is None else np.asarray(years, int)
    m = grid.n_cells
    p = (1.0 / years)[None, :, None, None, None]
    prob = np.broadcast_to(p, (n_draws, years.size, 2, n_days, m)).copy()
    ind = (rng.random(prob.shape) < prob).astype(np.int8)
    return PredictiveDraws(prob=prob, ind=ind, years=years, grid=grid)


def one_step_ahead(draws, coords, dist_coast, marks, rng, n_draws=200, x=None):
    """Held-out record probabilities given the observed previous-day marks.

    Parameters
    ----------
    draws : PosteriorDraws of a fit that did not use these sites.
    coords, dist_coast : held-out site locations (m, 2) and distances (m,).
    marks : (2, T, n_days + 1, m) observed marks; ties enter the lags as 1/r.
    x : covariate values at the held-out sites (anisotropic fits only).

    Returns
    -------
    (n_draws, 2, T - 1, n_days, m) probabilities for years 2..T.
    """
    marks = np.asarray(marks)
    _, T, L1, m = marks.shape
    if T != draws.T or L1 - 1 != draws.n_days:
        raise ValueError("held-out marks do not match the fitted window")
    coords = np.asarray(coords, float).reshape(-1, 2)
    log_dist = np.log1p(np.asarray(dist_coast, float))
    lag = success_probability(marks)
    trend = design.trend_covariate(np.arange(2, T + 1))
    X = design.design_matrix(trend[:, None, None], lag[0, 1:, :-1], lag[1, 1:, :-1],
                             log_dist[None, None, :])  # (T-1, L, m, K)
    picks = select_draws(draws, n_draws)
    L = draws.n_days
    out = np.empty((len(picks), 2, T - 1, L, m))
    for b, (c, i) in enumerate(picks):
        dk = DrawKriger(draws, c, i, coords, x)
        a11, a21, a22 = dk.coreg_at(log_dist, rng)
        w = np.stack([dk.samplers[j].draw(dk.w[j].T, rng).T for j in range(2)])  # (2, D, m)
        v = coreg.apply(a11, a21, a22, w).reshape(2, T - 1, L, m)
        eta = np.einsum("tlmk,jk->jtlm", X, dk.B) + v
        out[b] = np.clip(design.probit_inv(eta), kernels.P_FLOOR, kernels.P_CEIL)
    return out
