"""Fixed-effects design of the bivariate autoregressive probit model.

Each likelihood cell (year t >= 2, day l, site s) has the covariate row::

    (1, Imax[l-1], Imin[l-1], log(1+dist), q, q*Imax[l-1], q*Imin[l-1], q*log(1+dist))

with ``q = probit(1/t)``. The coefficient matrix ``B`` has one row per
signal (max, min).
"""
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

K = 8
COLUMNS = (
    "intercept",
    "lag_max",
    "lag_min",
    "log_dist",
    "trend",
    "trend_x_lag_max",
    "trend_x_lag_min",
    "trend_x_log_dist",
)

# Univariate fits drop the other signal's lag and its trend interaction.
UNIVARIATE_MASK = np.array(
    [
        [1, 1, 0, 1, 1, 1, 0, 1],
        [1, 0, 1, 1, 1, 0, 1, 1],
    ],
    dtype=bool,
)
FULL_MASK = np.ones((2, K), dtype=bool)

# Rational approximation of the standard normal quantile (lower region).
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)
_P_LOW = 0.02425


def _lower_quantile(q):
    # q in (0, 0.5]
    x = np.empty_like(q)
    tail = q < _P_LOW
    if tail.any():
        r = np.sqrt(-2.0 * np.log(q[tail]))
        num = ((((_C[0] * r + _C[1]) * r + _C[2]) * r + _C[3]) * r + _C[4]) * r + _C[5]
        den = (((_D[0] * r + _D[1]) * r + _D[2]) * r + _D[3]) * r + 1.0
        x[tail] = num / den
    mid = ~tail
    if mid.any():
        u = q[mid] - 0.5
        r = u * u
        num = (((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * u
        den = ((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0
        x[mid] = num / den
    # one Newton step against the accurate normal CDF
    dens = np.exp(-0.5 * x * x) / np.sqrt(2.0 * np.pi)
    return x - (ndtr(x) - q) / dens


def probit(p):
    """Standard normal quantile Phi^{-1}(p) for p in (0, 1)."""
    arr = np.asarray(p, dtype=np.float64)
    if np.any(~((arr > 0.0) & (arr < 1.0))):
        raise ValueError("probit argument must lie in (0, 1)")
    flat = np.atleast_1d(arr).ravel()
    out = np.empty_like(flat)
    low = flat <= 0.5
    out[low] = _lower_quantile(flat[low])
    out[~low] = -_lower_quantile(1.0 - flat[~low])
    out = out.reshape(arr.shape)
    return float(out) if out.ndim == 0 else out


def probit_inv(z):
    """Standard normal CDF."""
    out = ndtr(np.asarray(z, dtype=np.float64))
    return float(out) if np.ndim(out) == 0 else out


def trend_covariate(t):
    """probit(1/t) for year index t >= 1 (0 at t = 2)."""
    t = np.asarray(t, dtype=np.float64)
    return probit(1.0 / t)


def build_design_row(t, prev_max_mark, prev_min_mark, dist_coast):
    """Covariate row of one likelihood cell."""
    if t < 2:
        raise ValueError("design rows exist only for t >= 2")
    if dist_coast < 0:
        raise ValueError("distance to coast must be non-negative")
    q = trend_covariate(t)
    ld = np.log1p(dist_coast)
    im, inn = float(prev_max_mark), float(prev_min_mark)
    return np.array([1.0, im, inn, ld, q, q * im, q * inn, q * ld])


def design_matrix(trend, lag_max, lag_min, log_dist):
    """Vectorised design: all inputs broadcast to a common length N."""
    trend, lag_max, lag_min, log_dist = np.broadcast_arrays(
        np.asarray(trend, float), np.asarray(lag_max, float),
        np.asarray(lag_min, float), np.asarray(log_dist, float))
    X = np.empty(trend.shape + (K,))
    X[..., 0] = 1.0
    X[..., 1] = lag_max
    X[..., 2] = lag_min
    X[..., 3] = log_dist
    X[..., 4] = trend
    X[..., 5] = trend * lag_max
    X[..., 6] = trend * lag_min
    X[..., 7] = trend * log_dist
    return X


def linear_predictor(B, row, v):
    """eta = B @ row + v for a (2, K) coefficient matrix."""
    B = np.asarray(B, dtype=np.float64)
    row = np.asarray(row, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if B.shape != (2, K) or row.shape[-1] != K or v.shape[-1] != 2:
        raise ValueError(f"shape mismatch: B {B.shape}, row {row.shape}, v {v.shape}")
    return row @ B.T + v


def stationary_coefficients():
    """B giving probit_inv(eta) = 1/t for every row (with v = 0)."""
    B = np.zeros((2, K))
    B[:, 4] = 1.0
    return B


@dataclass
class Standardizer:
    """Per-column centring/scaling; the intercept column is left alone."""

    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def identity(cls, k=K):
        return cls(np.zeros(k), np.ones(k))

    @classmethod
    def fit(cls, rows):
        rows = np.asarray(rows, dtype=np.float64)
        mean = rows.mean(axis=0)
        scale = rows.std(axis=0)
        mean[0], scale[0] = 0.0, 1.0
        bad = np.flatnonzero(scale[1:] <= 1e-12) + 1
        if bad.size:
            names = ", ".join(COLUMNS[i] if rows.shape[1] == K else str(i) for i in bad)
            raise ValueError(f"zero-variance design column(s): {names}")
        return cls(mean, scale)

    def transform(self, rows):
        return (np.asarray(rows, dtype=np.float64) - self.mean) / self.scale

    def back_transform(self, B_std):
        """Coefficients on the standardized scale -> raw scale."""
        B_std = np.asarray(B_std, dtype=np.float64)
        B = B_std / self.scale
        B[..., 0] = B_std[..., 0] - np.sum(B_std[..., 1:] * self.mean[1:] / self.scale[1:], axis=-1)
        return B

    def forward_transform(self, B):
        """Raw-scale coefficients -> standardized scale."""
        B = np.asarray(B, dtype=np.float64)
        B_std = B * self.scale
        B_std[..., 0] = B[..., 0] + np.sum(B[..., 1:] * self.mean[1:], axis=-1)
        return B_std


def standardize(rows):
    """Return (standardized rows, fitted :class:`Standardizer`)."""
    st = Standardizer.fit(rows)
    return st.transform(rows), st


def back_transform(B_std, standardizer):
    return standardizer.back_transform(B_std)
