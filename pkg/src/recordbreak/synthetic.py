"""Synthetic station data: an i.i.d. baseline and a forward model simulator.

The model generator simulates record indicators directly and then builds
pseudo-temperatures (integer tenths of a degree) whose record marks are
exactly the simulated ones.
"""
from dataclasses import dataclass, field

import numpy as np

from . import coreg, design, gp, kernels
from .records import SEED_DAY, DailyTemperatureSeries, build_panel

GENERATORS = ("stationary", "model")

# Raw-scale coefficients with persistence and a mild warming trend: the
# yearly rate t * p_t rises from about 1 to 1.6 over 20 years.
DEFAULT_COEFFICIENTS = np.array([
    [-0.10, 0.80, 0.10, -0.05, 0.92, -0.10, -0.10, 0.02],
    [-0.15, 0.25, 0.60, -0.05, 0.92, -0.05, -0.10, 0.02],
])


def sx_surface(x_km, y_km):
    """Smooth positive field used as the sx covariate of synthetic sites."""
    x_km = np.asarray(x_km, float)
    y_km = np.asarray(y_km, float)
    return 3.0 + 0.8 * np.sin(x_km / 250.0) + 0.5 * np.cos(y_km / 300.0)


@dataclass
class SyntheticSpec:
    n_sites: int = 8
    T: int = 20
    n_days: int = 30
    generator: str = "stationary"
    coefficients: np.ndarray | None = None
    a: tuple = (1.0, 0.5, 0.8)
    varying_coreg: dict | None = None
    eff_range: float = 150.0
    eff_range_x: float | None = None
    tie_rate: float = 0.0
    missing_rate: float = 0.0
    extent_km: float = 600.0
    start_year: int = 1961

    def __post_init__(self):
        if self.generator not in GENERATORS:
            raise ValueError(f"generator must be one of {GENERATORS}")
        if self.n_sites < 2 or self.T < 3:
            raise ValueError("need n_sites >= 2 and T >= 3")
        if not 1 <= self.n_days <= 92:
            raise ValueError("n_days must lie in 1..92")
        for name in ("tie_rate", "missing_rate"):
            r = getattr(self, name)
            if not 0.0 <= r < 1.0:
                raise ValueError(f"{name} must lie in [0, 1)")
        if self.eff_range <= 0 or (self.eff_range_x is not None and self.eff_range_x <= 0):
            raise ValueError("effective ranges must be positive")
        if self.coefficients is not None:
            self.coefficients = np.asarray(self.coefficients, float)
            if self.coefficients.shape != (2, design.K):
                raise ValueError(f"coefficients must have shape (2, {design.K})")
        if self.varying_coreg is None and not (self.a[0] >= 0 and self.a[2] >= 0):
            raise ValueError("coregionalisation diagonals must be non-negative")

    @property
    def days(self):
        return np.arange(SEED_DAY, SEED_DAY + self.n_days + 1)

    @property
    def years(self):
        return np.arange(self.start_year, self.start_year + self.T)


@dataclass
class SyntheticData:
    series: list
    marks: np.ndarray
    coords: np.ndarray
    dist_coast: np.ndarray
    sx: np.ndarray
    truth: dict = field(default_factory=dict)

    def panel(self):
        return build_panel(self.series)


def random_sites(n, extent_km, rng):
    coords = rng.uniform(0.0, extent_km, size=(n, 2))
    dist = coords[:, 0].copy()
    return coords, dist, sx_surface(coords[:, 0], coords[:, 1])


def _coreg_terms(spec, coords, dist, rng):
    if spec.varying_coreg is None:
        a11, a21, a22 = (float(v) for v in spec.a)
        return a11, a21, a22, {"a": np.array([a11, a21, a22])}
    cfg = spec.varying_coreg
    beta = np.asarray(cfg.get("beta", [[0.0, 0.0], [0.5, 0.0], [-0.2, 0.0]]), float)
    sigma2 = np.asarray(cfg.get("sigma2", [0.1, 0.1, 0.1]), float)
    decay = float(cfg.get("decay", coreg.FIXED_DECAY))
    Z = np.column_stack([np.ones(len(dist)), np.log1p(dist)])
    f = gp.sample_gp(gp.KernelSpec(decay), coords, rng, size=3)
    fields = Z @ beta.T + f.T * np.sqrt(sigma2)
    a11, a21, a22 = np.exp(fields[:, 0]), fields[:, 1], np.exp(fields[:, 2])
    return a11, a21, a22, {"a_fields": np.stack([a11, a21, a22]), "beta_a": beta,
                           "sigma2_a": sigma2}


def simulate_indicators(spec, coords, dist, sx, rng):
    """Forward simulation of (2, T, n_days + 1, n) indicators.

    Year 1 is all ones, the seed day of year t >= 2 is Bernoulli(1/t) and
    the remaining days follow the autoregressive probit model.
    """
    B = DEFAULT_COEFFICIENTS if spec.coefficients is None else spec.coefficients
    n, T, L = len(dist), spec.T, spec.n_days
    kernel = gp.KernelSpec.from_ranges(spec.eff_range, spec.eff_range_x)
    x = np.log(sx) if kernel.anisotropic else None
    a11, a21, a22, truth = _coreg_terms(spec, coords, dist, rng)
    log_dist = np.log1p(dist)
    ind = np.ones((2, T, L + 1, n), dtype=np.int8)
    prob = np.ones((2, T, L + 1, n))
    w_all = np.zeros((2, T - 1, L, n))
    for ti in range(1, T):
        t = ti + 1
        seed = (rng.random((2, n)) < 1.0 / t).astype(np.int8)
        ind[:, ti, 0, :] = seed
        prob[:, ti, 0, :] = 1.0 / t
        w = gp.sample_gp(kernel, coords, rng, size=2 * L, x=x).reshape(2, L, n)
        w_all[:, ti - 1] = w
        v = coreg.apply(a11, a21, a22, w)  # (2, L, n)
        u = rng.random((L, n, 2))
        p, I = kernels.simulate_days(B, np.ascontiguousarray(seed.T), log_dist,
                                     float(design.trend_covariate(t)),
                                     np.ascontiguousarray(v.transpose(1, 2, 0)), u)
        prob[:, ti, 1:, :] = p.transpose(2, 0, 1)
        ind[:, ti, 1:, :] = I.transpose(2, 0, 1)
    truth.update({"B": np.array(B), "range": spec.eff_range, "w": w_all, "prob": prob})
    if spec.eff_range_x is not None:
        truth["range_x"] = spec.eff_range_x
    return ind, truth


def pseudo_temperatures(ind, tie_rate, missing_rate, rng, base=(300, 180)):
    """Integer-tenth temperatures whose record marks reproduce ``ind``.

    Returns (values, marks): values (2, T, L, n) in degrees with NaN for
    missing; marks (2, T, L, n) int32 with ties where a record cell was
    turned into a copy of the running maximum.
    """
    _, T, L, n = ind.shape
    vals = np.empty(ind.shape)
    marks = np.zeros(ind.shape, dtype=np.int32)
    for j in range(2):
        cur = base[j] + rng.integers(-30, 31, size=(L, n))
        weak = np.ones((L, n), dtype=np.int64)
        vals[j, 0] = cur
        marks[j, 0] = 1
        for ti in range(1, T):
            rec = ind[j, ti] == 1
            step = rng.integers(1, 11, size=(L, n))
            tie = rec & (rng.random((L, n)) < tie_rate)
            miss = ~rec & (rng.random((L, n)) < missing_rate)
            new = np.where(rec, cur + step, cur - step)
            new = np.where(tie, cur, new)
            weak = np.where(tie, weak + 1, np.where(rec, 1, weak))
            marks[j, ti] = np.where(tie, weak, rec.astype(np.int32))
            vals[j, ti] = np.where(miss, np.nan, new)
            cur = np.where(rec & ~tie, new, cur)
    return vals / 10.0, marks


def generate_synthetic(spec, seed):
    """Simulate station series and the marks they should produce."""
    rng = np.random.default_rng(seed)
    coords, dist, sx = random_sites(spec.n_sites, spec.extent_km, rng)
    T, L1, n = spec.T, spec.n_days + 1, spec.n_sites
    if spec.generator == "stationary":
        vals = rng.standard_normal((2, T, L1, n))
        if spec.tie_rate > 0:
            tie = rng.random(vals.shape) < spec.tie_rate
            for ti in range(1, T):
                vals[:, ti] = np.where(tie[:, ti], vals[:, :ti].max(axis=1), vals[:, ti])
        marks = np.stack([kernels.record_marks(vals[j].reshape(T, -1)).reshape(T, L1, n)
                          for j in range(2)])
        if spec.missing_rate > 0:
            miss = (marks == 0) & (rng.random(vals.shape) < spec.missing_rate)
            vals = np.where(miss, np.nan, vals)
        truth = {}
    else:
        ind, truth = simulate_indicators(spec, coords, dist, sx, rng)
        vals, marks = pseudo_temperatures(ind, spec.tie_rate, spec.missing_rate, rng)
        truth["indicators"] = ind
    series = []
    for i in range(n):
        series.append(DailyTemperatureSeries(
            site_id=f"S{i + 1:03d}", x_km=float(coords[i, 0]), y_km=float(coords[i, 1]),
            dist_coast=float(dist[i]), sx=float(sx[i]), years=spec.years, days=spec.days,
            tmax=vals[0, :, :, i], tmin=vals[1, :, :, i]))
    return SyntheticData(series=series, marks=marks, coords=coords, dist_coast=dist,
                         sx=sx, truth=truth)


def stationary_marks(n_series, T, rng):
    """Marks of ``n_series`` i.i.d. continuous series, shape (T, n_series)."""
    return kernels.record_marks(rng.standard_normal((T, n_series)))
