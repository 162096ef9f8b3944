"""Lower-triangular coregionalisation of the two daily random effects.

With ``A = [[a11, 0], [a21, a22]]`` the random effects are ``v = A w`` for
independent unit-variance processes ``w = (w1, w2)``.
"""
from dataclasses import dataclass

import numpy as np

FIXED_DECAY = 1.0 / 300.0


@dataclass(frozen=True)
class CoregConstant:
    a11: float
    a21: float
    a22: float

    def __post_init__(self):
        if not (self.a11 > 0 and self.a22 > 0):
            raise ValueError("coregionalisation diagonals must be positive")

    def matrix(self):
        return np.array([[self.a11, 0.0], [self.a21, self.a22]])


@dataclass
class CoregField:
    """Per-site coregionalisation with its GP hyperparameters.

    ``log_a11`` and ``log_a22`` are the GP-scale states of the diagonals;
    ``a21`` is Gaussian on its raw scale. ``beta`` has one row of length 2
    per field (intercept, log(1+dist) slope) in the order (a11, a21, a22).
    """

    log_a11: np.ndarray
    a21: np.ndarray
    log_a22: np.ndarray
    beta: np.ndarray
    sigma2: np.ndarray
    decay: float = FIXED_DECAY

    @property
    def a11(self):
        return np.exp(self.log_a11)

    @property
    def a22(self):
        return np.exp(self.log_a22)

    def site(self, i):
        return CoregConstant(float(self.a11[i]), float(self.a21[i]), float(self.a22[i]))


def apply(a11, a21, a22, w):
    """v = A w; ``w`` has a leading axis of length 2 (w1, w2).

    The coefficients broadcast against the trailing axes, so per-site fields
    work with w of shape (2, ..., n_sites).
    """
    w = np.asarray(w, dtype=np.float64)
    v1 = a11 * w[0]
    v2 = a21 * w[0] + a22 * w[1]
    return np.stack([v1, v2])


def induced_correlation(a11, a21, a22):
    """Correlation between the two random effects (free of a11)."""
    a21 = np.asarray(a21, dtype=np.float64)
    a22 = np.asarray(a22, dtype=np.float64)
    norm = np.sqrt(a21 ** 2 + a22 ** 2)
    if np.any(norm == 0):
        raise ValueError("a21 and a22 cannot both be zero")
    out = a21 / norm
    return float(out) if out.ndim == 0 else out


def spatial_share(a11, a21, a22):
    """Share of spatial variance in each latent linear predictor.

    Returns ``(a11^2 / (a11^2 + 1), (a21^2 + a22^2) / (a21^2 + a22^2 + 1))``.
    """
    s1 = np.asarray(a11, dtype=np.float64) ** 2
    s2 = np.asarray(a21, dtype=np.float64) ** 2 + np.asarray(a22, dtype=np.float64) ** 2
    share_max = s1 / (s1 + 1.0)
    share_min = s2 / (s2 + 1.0)
    if np.ndim(share_max) == 0 and np.ndim(share_min) == 0:
        return float(share_max), float(share_min)
    return share_max, share_min


def local_covariance(a11, a21, a22):
    """T(s) = A(s) A(s)^T, shape (..., 2, 2)."""
    a11, a21, a22 = np.broadcast_arrays(np.asarray(a11, float), np.asarray(a21, float),
                                        np.asarray(a22, float))
    T = np.empty(a11.shape + (2, 2))
    T[..., 0, 0] = a11 ** 2
    T[..., 0, 1] = T[..., 1, 0] = a11 * a21
    T[..., 1, 1] = a21 ** 2 + a22 ** 2
    return T


def block_average(values, cells=None):
    """Grid mean of per-cell values (optionally over a subset of cells).

    The last axis indexes cells, so stacks of per-draw fields average cell-wise.
    """
    values = np.asarray(values, dtype=np.float64)
    if cells is not None:
        values = values[..., np.asarray(cells, dtype=np.intp)]
    if values.shape[-1] == 0:
        raise ValueError("block average over an empty grid")
    out = values.mean(axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def derived_block_averages(a11, a21, a22):
    """Block averages of the fields and their derived quantities.

    Derived quantities are computed per cell first and then averaged.
    Inputs have cells on the last axis; leading axes (draws) are kept.
    """
    corr = induced_correlation(a11, a21, a22)
    share_max, share_min = spatial_share(a11, a21, a22)
    return {
        "a11": block_average(a11),
        "a21": block_average(a21),
        "a22": block_average(a22),
        "corr": block_average(corr),
        "share_max": block_average(share_max),
        "share_min": block_average(share_min),
    }
