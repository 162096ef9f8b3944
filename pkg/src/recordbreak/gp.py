"""Exponential-covariance Gaussian processes on planar (km) coordinates.

Latent processes have unit variance. The anisotropic kernel multiplies the
spatial exponential correlation by an exponential correlation in a scalar
covariate (``x(s) = log(sx(s))``)::

    C(s, s') = exp(-phi * |s - s'|) * exp(-phi_x * |x(s) - x(s')|)
"""
from dataclasses import dataclass

import numpy as np
from scipy import linalg
from scipy.spatial.distance import cdist

JITTER_START = 1e-10
JITTER_MAX = 1e-8
DEFAULT_DECAY = 1.0 / 300.0


@dataclass(frozen=True)
class KernelSpec:
    decay: float
    decay_x: float | None = None

    def __post_init__(self):
        if not self.decay > 0:
            raise ValueError(f"spatial decay must be positive, got {self.decay}")
        if self.decay_x is not None and not self.decay_x > 0:
            raise ValueError(f"covariate decay must be positive, got {self.decay_x}")

    @property
    def anisotropic(self):
        return self.decay_x is not None

    @classmethod
    def from_ranges(cls, eff_range, eff_range_x=None):
        """Build from effective ranges 3/phi (and 3/phi_x)."""
        return cls(3.0 / eff_range, None if eff_range_x is None else 3.0 / eff_range_x)


def _as_coords(coords):
    c = np.asarray(coords, dtype=np.float64)
    if c.ndim == 1:
        c = c.reshape(-1, 2)
    return c


def cross_cov(kernel, coords_a, coords_b, x_a=None, x_b=None):
    """Correlation between two site sets."""
    d = cdist(_as_coords(coords_a), _as_coords(coords_b))
    C = np.exp(-kernel.decay * d)
    if kernel.anisotropic:
        if x_a is None or x_b is None:
            raise ValueError("anisotropic kernel needs covariate values at every site")
        dx = np.abs(np.asarray(x_a, float)[:, None] - np.asarray(x_b, float)[None, :])
        C = C * np.exp(-kernel.decay_x * dx)
    return C


def cov_matrix(kernel, coords, x=None):
    """Correlation matrix of one site set (diagonal exactly 1)."""
    C = cross_cov(kernel, coords, coords, x, x)
    np.fill_diagonal(C, 1.0)
    return C


def cholesky_jitter(C):
    """Lower Cholesky factor, adding diagonal jitter only on failure.

    Jitter starts at 1e-10 and grows tenfold up to 1e-8; returns
    ``(L, jitter)``. Raises ``numpy.linalg.LinAlgError`` when exhausted.
    """
    try:
        return np.linalg.cholesky(C), 0.0
    except np.linalg.LinAlgError:
        pass
    jitter = JITTER_START
    eye = np.eye(C.shape[0])
    while jitter <= JITTER_MAX * (1 + 1e-9):
        try:
            return np.linalg.cholesky(C + jitter * eye), jitter
        except np.linalg.LinAlgError:
            jitter *= 10.0
    raise np.linalg.LinAlgError(
        "covariance not positive definite after jitter 1e-8 (duplicate sites?)")


def psd_factor(C):
    """Factor F with F F^T = C for a positive semi-definite C (pivoted Cholesky)."""
    n = C.shape[0]
    c, piv, rank, info = linalg.lapack.dpstrf(np.array(C, order="F"), lower=1, tol=-1.0)
    if info < 0:
        raise np.linalg.LinAlgError("pivoted Cholesky failed")
    Lp = np.tril(c)[:, :rank]
    F = np.zeros((n, rank))
    F[piv - 1] = Lp
    return F


def sample_gp(kernel, coords, rng, size=None, x=None, jitter=True):
    """Mean-zero draws with covariance :func:`cov_matrix`.

    Returns shape (n,) for ``size=None`` or (size, n). With ``jitter=False``
    a rank-revealing factor is used, so coincident sites get identical draws.
    """
    C = cov_matrix(kernel, coords, x)
    if jitter:
        F, _ = cholesky_jitter(C)
    else:
        F = psd_factor(C)
    m = 1 if size is None else int(size)
    z = rng.standard_normal((m, F.shape[1]))
    out = z @ F.T
    return out[0] if size is None else out


def krige(kernel, obs_coords, obs_values, new_coords, obs_x=None, new_x=None):
    """Conditional mean and covariance of a unit-variance, mean-zero GP.

    ``obs_values`` may be (n,) or (n, D) for D fields sharing the kernel; the
    mean then has shape (m,) or (m, D).
    """
    C_oo = cov_matrix(kernel, obs_coords, obs_x)
    C_on = cross_cov(kernel, obs_coords, new_coords, obs_x, new_x)
    C_nn = cov_matrix(kernel, new_coords, new_x)
    try:
        L, _ = cholesky_jitter(C_oo)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(f"singular observation covariance: {exc}") from None
    A = linalg.cho_solve((L, True), C_on)
    mean = A.T @ np.asarray(obs_values, dtype=np.float64)
    cov = C_nn - C_on.T @ A
    cov = 0.5 * (cov + cov.T)
    return mean, cov


def coincident(obs_coords, new_coords, obs_x=None, new_x=None):
    """Index of the observed site each new site coincides with, or -1."""
    d = cdist(_as_coords(new_coords), _as_coords(obs_coords))
    same = d == 0.0
    if obs_x is not None and new_x is not None:
        same &= np.asarray(new_x, float)[:, None] == np.asarray(obs_x, float)[None, :]
    idx = np.full(d.shape[0], -1)
    hit = same.any(axis=1)
    idx[hit] = np.argmax(same[hit], axis=1)
    return idx


class ConditionalSampler:
    """Repeated conditional draws at fixed new sites given observed fields.

    The kriging weights and the conditional covariance factor are computed
    once; :meth:`draw` then costs two matrix products. New sites that
    coincide with observed ones receive the observed value exactly.
    """

    def __init__(self, kernel, obs_coords, new_coords, obs_x=None, new_x=None,
                 mean_obs=None, mean_new=None, scale=1.0):
        self.match = coincident(obs_coords, new_coords, obs_x, new_x)
        free = np.flatnonzero(self.match < 0)
        self.free = free
        new_coords = _as_coords(new_coords)
        fx = None if new_x is None else np.asarray(new_x, float)[free]
        self.scale = scale
        self.mean_obs = mean_obs
        self.mean_new = mean_new
        if free.size:
            C_oo = cov_matrix(kernel, obs_coords, obs_x)
            C_on = cross_cov(kernel, obs_coords, new_coords[free], obs_x, fx)
            C_nn = cov_matrix(kernel, new_coords[free], fx)
            L, _ = cholesky_jitter(C_oo)
            A = linalg.cho_solve((L, True), C_on)
            cov = C_nn - C_on.T @ A
            cov = 0.5 * (cov + cov.T)
            self.weights = A.T
            self.factor, _ = cholesky_jitter(cov)
        else:
            self.weights = None
            self.factor = None

    def draw(self, obs_values, rng):
        """Conditional draw; ``obs_values`` is (n,) or (n, D)."""
        w = np.asarray(obs_values, dtype=np.float64)
        squeeze = w.ndim == 1
        if squeeze:
            w = w[:, None]
        if self.mean_obs is not None:
            w = w - np.asarray(self.mean_obs)[:, None]
        out = np.empty((self.match.size, w.shape[1]))
        hit = self.match >= 0
        out[hit] = w[self.match[hit]]
        if self.free.size:
            z = rng.standard_normal((self.free.size, w.shape[1]))
            out[self.free] = self.weights @ w + np.sqrt(self.scale) * (self.factor @ z)
        if self.mean_new is not None:
            out = out + np.asarray(self.mean_new)[:, None]
        return out[:, 0] if squeeze else out


def simple_krige_covariate(obs_x, obs_coords, new_coords, decay=DEFAULT_DECAY):
    """Simple kriging of a scalar site covariate on spatial distance only.

    Values are centred on their sample mean, kriged with an isotropic
    exponential kernel of the given decay, and the mean is added back.
    """
    obs_x = np.asarray(obs_x, dtype=np.float64)
    if obs_x.size < 2:
        raise ValueError("simple kriging needs at least two observed sites")
    mu = obs_x.mean()
    kernel = KernelSpec(decay)
    try:
        mean, _ = krige(kernel, obs_coords, obs_x - mu, new_coords)
    except np.linalg.LinAlgError as exc:
        raise ValueError(f"degenerate site set for kriging: {exc}") from None
    out = mean + mu
    hit = coincident(obs_coords, new_coords)
    out[hit >= 0] = obs_x[hit[hit >= 0]]
    return out


def gp_loglik(L, S, n_fields):
    """Log-density (up to a constant) of ``n_fields`` iid fields.

    ``L`` is the Cholesky factor of the correlation matrix and ``S`` the
    scatter matrix ``W W^T`` summed over the fields.
    """
    logdet = 2.0 * np.sum(np.log(np.diag(L)))
    Linv = linalg.solve_triangular(L, np.eye(L.shape[0]), lower=True)
    quad = np.sum((Linv @ S) * Linv)
    return -0.5 * n_fields * logdet - 0.5 * quad
