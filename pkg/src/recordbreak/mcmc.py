"""Data-augmentation MCMC for the bivariate record models M0-M5.

Record indicators are the signs of latent Gaussians ``Y = mu + v + eps``
(unit-variance ``eps``). Given the latents every block has a conjugate or
low-dimensional update:

* tied marks are resolved as Bernoulli(1/r) each sweep;
* ``Y`` is truncated normal given the resolved indicators;
* each row of ``B`` is multivariate normal (normal prior, unit error variance);
* the day fields ``w`` are joint Gaussian per day, with one shared precision
  factor per sweep;
* the constant coregionalisation is (truncated) normal; the spatially varying
  one uses per-site random-walk Metropolis plus conjugate hyperparameters;
* the effective ranges use log-scale random-walk Metropolis.

Metropolis step sizes adapt (Robbins-Monro towards ``target_accept``) during
burn-in only.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
import logging

import numpy as np
from scipy import linalg
from scipy.special import log_ndtr
from scipy.spatial.distance import pdist

from . import coreg as coreg_mod
from . import design, gp, kernels
from .records import success_probability

log = logging.getLogger(__name__)


class NumericalError(RuntimeError):
    """The chain reached a non-finite state."""


@dataclass(frozen=True)
class ModelVariant:
    name: str
    stationary: bool = False
    bivariate: bool = True
    varying_coreg: bool = False
    anisotropic: bool = False

    @property
    def mask(self):
        return design.FULL_MASK if self.bivariate else design.UNIVARIATE_MASK


VARIANTS = {
    "M0": ModelVariant("M0", stationary=True),
    "M1": ModelVariant("M1", bivariate=False),
    "M2": ModelVariant("M2"),
    "M3": ModelVariant("M3", varying_coreg=True),
    "M4": ModelVariant("M4", anisotropic=True),
    "M5": ModelVariant("M5", varying_coreg=True, anisotropic=True),
}


def get_variant(name):
    try:
        return VARIANTS[name.upper()]
    except KeyError:
        raise ValueError(f"unknown model variant {name!r}; expected one of {sorted(VARIANTS)}") from None


@dataclass
class PriorConfig:
    beta_var: float = 100.0
    diag_scale: float = 5.0
    a21_var: float = 100.0
    range_shape: float = 2.0
    range_scale: float = 300.0
    range_x_shape: float = 2.0
    range_x_scale: float | None = None
    sv_beta_var: float = 100.0
    sv_sigma2_shape: float = 0.1
    sv_sigma2_scale: float = 0.1
    sv_decay: float = coreg_mod.FIXED_DECAY

    def resolved_range_x_scale(self, x):
        """IG scale of 3/phi_x: prior mean = one third of the covariate spread."""
        if self.range_x_scale is not None:
            return self.range_x_scale
        spread = float(np.max(pdist(np.asarray(x, float)[:, None]))) if len(x) > 1 else 0.0
        if spread <= 0:
            raise ValueError("anisotropic kernel needs distinct covariate values")
        return spread / 3.0 * (self.range_x_shape - 1.0)


@dataclass
class SamplerConfig:
    sweeps: int = 20000
    burn_in_fraction: float = 1.0 / 3.0
    thin_to: int = 500
    n_chains: int = 2
    seed: int = 20240601
    target_accept: float = 0.35
    adapt: bool = True
    standardize: bool = True
    archive_w: bool = True
    init_range: float = 300.0
    threads: int = 1

    def kept_sweeps(self):
        burn = int(round(self.sweeps * self.burn_in_fraction))
        post = self.sweeps - burn
        if post < self.thin_to:
            raise ValueError(
                f"{post} post burn-in sweeps cannot be thinned to {self.thin_to} draws")
        step = post // self.thin_to
        return burn, burn + step * (np.arange(self.thin_to) + 1) - 1


@dataclass
class FitData:
    """Record marks and site information used by the sampler.

    ``marks`` has shape (2, T, n_days, n) with the seed day first.
    ``x`` is the anisotropy covariate log(sx) (None when unavailable).
    """

    marks: np.ndarray
    coords: np.ndarray
    dist_coast: np.ndarray
    x: np.ndarray | None = None
    years: np.ndarray | None = None
    days: np.ndarray | None = None
    site_ids: list | None = None

    @classmethod
    def from_panel(cls, panel):
        return cls(
            marks=panel.marks,
            coords=panel.coords,
            dist_coast=panel.dist_coast,
            x=None if panel.sx is None else np.log(panel.sx),
            years=panel.years,
            days=panel.days,
            site_ids=list(panel.site_ids),
        )

    @property
    def n_sites(self):
        return self.marks.shape[3]

    @property
    def T(self):
        return self.marks.shape[1]

    @property
    def n_days(self):
        return self.marks.shape[2] - 1

    def subset(self, sites):
        sites = np.asarray(sites)
        return FitData(
            marks=self.marks[..., sites],
            coords=self.coords[sites],
            dist_coast=self.dist_coast[sites],
            x=None if self.x is None else self.x[sites],
            years=self.years,
            days=self.days,
            site_ids=None if self.site_ids is None else [self.site_ids[i] for i in sites],
        )


def resolve_ties(r, rng):
    """Resolve r-tied marks: each is a record with probability 1/r."""
    r = np.asarray(r)
    if np.any(r < 2):
        raise ValueError("tied marks need r >= 2")
    return rng.random(r.shape) < 1.0 / r


def sample_tied(marks, rng):
    """Binary indicators with every tie resolved independently."""
    marks = np.asarray(marks)
    out = (marks == 1).astype(np.int8)
    tied = marks >= 2
    if tied.any():
        out[tied] = resolve_ties(marks[tied], rng)
    return out


def open_uniform(rng, shape):
    """Uniforms strictly inside (0, 1)."""
    return rng.random(shape) + 2.0 ** -54


def draw_coefficients(X, r, prior_var, rng):
    """Conjugate draw of one coefficient row under unit error variance."""
    k = X.shape[1]
    P = X.T @ X + np.eye(k) / prior_var
    try:
        L = np.linalg.cholesky(P)
    except np.linalg.LinAlgError:
        raise NumericalError("singular posterior precision for regression coefficients") from None
    mean = linalg.cho_solve((L, True), X.T @ r)
    return mean + linalg.solve_triangular(L.T, rng.standard_normal(k), lower=False)


def draw_day_fields(R1, R2, a11, a21, a22, e1, e2, rng):
    """Joint Gaussian draw of (w1, w2) for every day.

    ``R1``, ``R2`` are prior precisions (n, n); ``e1``, ``e2`` the residuals
    ``Y - mu`` with shape (D, n); the coregionalisation terms are scalars or
    per-site arrays. Returns w with shape (2, D, n).
    """
    n = R1.shape[0]
    D = e1.shape[0]
    a11 = np.broadcast_to(np.asarray(a11, float), (n,))
    a21 = np.broadcast_to(np.asarray(a21, float), (n,))
    a22 = np.broadcast_to(np.asarray(a22, float), (n,))
    P = np.zeros((2 * n, 2 * n))
    P[:n, :n] = R1
    P[n:, n:] = R2
    idx = np.arange(n)
    P[idx, idx] += a11 ** 2 + a21 ** 2
    P[n + idx, n + idx] += a22 ** 2
    P[idx, n + idx] += a21 * a22
    P[n + idx, idx] += a21 * a22
    if D == 0:
        return np.zeros((2, 0, n))
    rhs = np.concatenate([(a11 * e1 + a21 * e2).T, (a22 * e2).T], axis=0)
    try:
        L = np.linalg.cholesky(P)
    except np.linalg.LinAlgError:
        raise NumericalError("day-field posterior precision is not positive definite") from None
    mean = linalg.cho_solve((L, True), rhs)
    draw = mean + linalg.solve_triangular(L.T, rng.standard_normal((2 * n, D)), lower=False)
    return np.stack([draw[:n].T, draw[n:].T])


def truncated_normal_positive(mean, prec, rng):
    """Draw from N(mean, 1/prec) restricted to (0, inf)."""
    sd = 1.0 / np.sqrt(prec)
    z = kernels.truncnorm_latent(np.atleast_1d(mean / sd), np.ones(1, dtype=np.int8),
                                 open_uniform(rng, 1))
    return float(z[0] * sd)


def log_inv_gamma(x, shape, scale):
    return -(shape + 1.0) * np.log(x) - scale / x


def mh_accept(log_ratio, log_u):
    """Metropolis decision; a zero log ratio is always accepted."""
    return bool(log_u < log_ratio)


class Sampler:
    """One MCMC chain for a non-stationary variant.

    The update methods mirror the sweep order used by :meth:`sweep`:
    ``update_tied``, ``update_Y``, ``update_B``, ``update_w``,
    ``update_coreg``, ``update_ranges``.
    """

    def __init__(self, variant, data, prior=None, config=None, rng=None):
        if variant.stationary:
            raise ValueError("the stationary variant has no sampler")
        self.variant = variant
        self.data = data
        self.prior = prior or PriorConfig()
        self.config = config or SamplerConfig()
        self.rng = rng if rng is not None else np.random.default_rng(self.config.seed)
        self.mask = variant.mask

        marks = np.asarray(data.marks)
        self.marks = marks
        _, T, L1, n = marks.shape
        self.T, self.L, self.n = T, L1 - 1, n
        self.D = (T - 1) * self.L
        self.N = self.D * n
        if variant.anisotropic and data.x is None:
            raise ValueError(f"{variant.name} needs the covariate sx at every fitting site")
        self.x = None if data.x is None else np.asarray(data.x, float)
        self.coords = np.asarray(data.coords, float)
        self.log_dist = np.log1p(np.asarray(data.dist_coast, float))
        self.trend = design.trend_covariate(np.arange(2, T + 1)) if T >= 2 else np.zeros(0)
        self.tied = marks >= 2
        self.tied_r = marks[self.tied]
        if self.config.standardize and self.N > 0:
            X0 = self._design(success_probability(marks))
            self.standardizer = design.Standardizer.fit(X0)
        else:
            self.standardizer = design.Standardizer.identity()
        self.n_groups = 1 if variant.bivariate else 2
        if variant.anisotropic:
            self.range_x_scale = self.prior.resolved_range_x_scale(self.x)
        self._init_state()

    # -- setup -------------------------------------------------------------

    def _design(self, ind):
        lag_max = ind[0, 1:, :-1, :]
        lag_min = ind[1, 1:, :-1, :]
        X = design.design_matrix(self.trend[:, None, None], lag_max, lag_min,
                                 self.log_dist[None, None, :])
        return X.reshape(-1, design.K)

    def _init_state(self):
        rng = self.rng
        n = self.n
        self.ind = sample_tied(self.marks, rng)
        self.B = np.where(self.mask, 0.1 * rng.standard_normal((2, design.K)), 0.0)
        if self.variant.varying_coreg:
            self.fields = np.zeros((3, n))
            self.fields[0] = 0.05 * rng.standard_normal(n)
            self.fields[2] = 0.05 * rng.standard_normal(n)
            if self.variant.bivariate:
                self.fields[1] = 0.05 * rng.standard_normal(n)
            self.Z = np.column_stack([np.ones(n), self.log_dist])
            self.beta_a = np.zeros((3, 2))
            self.sigma2_a = np.ones(3)
            Ca = gp.cov_matrix(gp.KernelSpec(self.prior.sv_decay), self.coords)
            La, _ = gp.cholesky_jitter(Ca)
            self.Ra = linalg.cho_solve((La, True), np.eye(n))
            self.sv_log_step = np.full((3, n), np.log(0.3))
            self.sv_accept = np.zeros((3, n))
            self.shift_log_step = np.full(2, np.log(0.05))
        else:
            self.a = np.array([np.exp(0.1 * rng.standard_normal()),
                               0.1 * rng.standard_normal() if self.variant.bivariate else 0.0,
                               np.exp(0.1 * rng.standard_normal())])
            self.coreg_log_step = np.full(3, np.log(0.1))
            self.coreg_accept = np.zeros(3)
        self.rho = np.full(2, self.config.init_range) * np.exp(0.2 * rng.standard_normal(self.n_groups)).repeat(
            2 // self.n_groups)
        self.rho_x = None
        if self.variant.anisotropic:
            rx = self.range_x_scale / (self.prior.range_x_shape - 1.0)
            self.rho_x = np.full(2, rx) * np.exp(0.2 * rng.standard_normal(self.n_groups)).repeat(
                2 // self.n_groups)
        self.range_log_step = np.full(self.n_groups, np.log(0.3))
        self.scale_log_step = np.log(0.05)
        self.scale_accept = 0.0
        self.range_x_log_step = np.full(self.n_groups, np.log(0.3))
        self.range_accept = np.zeros(self.n_groups)
        self.range_x_accept = np.zeros(self.n_groups)
        self._refresh_kernels()
        self.w = np.zeros((2, self.D, n))
        self._refresh_design()
        self.Y = np.zeros((2, self.N))
        self.update_Y()
        self.iteration = 0

    def kernel(self, j):
        return gp.KernelSpec(3.0 / self.rho[j],
                             None if self.rho_x is None else 3.0 / self.rho_x[j])

    def _cov(self, j, rho=None, rho_x=None):
        rho = self.rho[j] if rho is None else rho
        if rho_x is None and self.rho_x is not None:
            rho_x = self.rho_x[j]
        k = gp.KernelSpec(3.0 / rho, None if rho_x is None else 3.0 / rho_x)
        return gp.cov_matrix(k, self.coords, self.x)

    def _set_kernel(self, j, C):
        L, _ = gp.cholesky_jitter(C)
        self.cov[j] = C
        self.chol[j] = L
        self.prec[j] = linalg.cho_solve((L, True), np.eye(self.n))

    def _refresh_kernels(self):
        self.cov, self.chol, self.prec = [None, None], [None, None], [None, None]
        for j in range(2):
            self._set_kernel(j, self._cov(j))

    def _refresh_design(self):
        X = self.standardizer.transform(self._design(self.ind)) if self.N else np.zeros((0, design.K))
        self.X = X
        self.response = self.ind[:, 1:, 1:, :].reshape(2, -1)

    # -- derived quantities -----------------------------------------------

    def coreg_terms(self):
        """(a11, a21, a22) as scalars or per-site arrays."""
        if self.variant.varying_coreg:
            return np.exp(self.fields[0]), self.fields[1].copy(), np.exp(self.fields[2])
        return self.a[0], self.a[1], self.a[2]

    def mu(self):
        return np.stack([self.X @ self.B[j] for j in range(2)])

    def v(self):
        a11, a21, a22 = self.coreg_terms()
        return coreg_mod.apply(a11, a21, a22, self.w).reshape(2, -1)

    def B_raw(self):
        return np.where(self.mask, self.standardizer.back_transform(self.B), 0.0)

    # -- updates -----------------------------------------------------------

    def update_tied(self):
        if self.tied_r.size:
            self.ind[self.tied] = resolve_ties(self.tied_r, self.rng)
            self._refresh_design()

    def update_Y(self):
        if self.N == 0:
            return
        eta = self.mu() + self.v()
        if not np.all(np.isfinite(eta)):
            raise NumericalError("non-finite linear predictor")
        u = open_uniform(self.rng, eta.size)
        self.Y = kernels.truncnorm_latent(eta.ravel(), self.response.ravel(), u).reshape(eta.shape)

    def update_B(self):
        v = self.v()
        for j in range(2):
            cols = self.mask[j]
            self.B[j] = 0.0
            self.B[j, cols] = draw_coefficients(self.X[:, cols], self.Y[j] - v[j],
                                                self.prior.beta_var, self.rng)

    def update_w(self):
        if self.D == 0:
            return
        e = (self.Y - self.mu()).reshape(2, self.D, self.n)
        a11, a21, a22 = self.coreg_terms()
        self.w = draw_day_fields(self.prec[0], self.prec[1], a11, a21, a22, e[0], e[1], self.rng)

    def _site_stats(self):
        e = (self.Y - self.mu()).reshape(2, self.D, self.n)
        w1, w2 = self.w
        return np.stack([
            np.einsum("ds,ds->s", w1, w1),
            np.einsum("ds,ds->s", w2, w2),
            np.einsum("ds,ds->s", w1, w2),
            np.einsum("ds,ds->s", e[0], w1),
            np.einsum("ds,ds->s", e[1], w1),
            np.einsum("ds,ds->s", e[1], w2),
        ]) if self.D else np.zeros((6, self.n))

    def update_coreg(self):
        stats = self._site_stats()
        if self.variant.varying_coreg:
            self._update_coreg_varying(stats)
        else:
            self._update_coreg_constant(stats.sum(axis=1))
            if self.D:
                self._collapsed_coreg()
        if self.D:
            self.interweave_coreg()
            self.rescale_latents()

    def rescale_latents(self):
        """Joint scale move (B, A) -> (g B, g A) with the latents integrated out.

        Probit likelihoods are nearly flat along this direction once the
        random effects dominate the unit error, which the other updates
        traverse slowly. The ratio uses the binary likelihood given v; the
        latents are redrawn afterwards. With A(s) the diagonal fields (and
        their intercepts) shift by log g, and the a21 field, its coefficients
        and its variance scale with g.
        """
        lam = np.exp(self.scale_log_step) * self.rng.standard_normal()
        eta = self.mu() + self.v()
        sign = np.where(self.response > 0, 1.0, -1.0)
        log_ratio = (np.sum(log_ndtr(sign * eta * np.exp(lam))) - np.sum(log_ndtr(sign * eta))
                     + self._scale_log_prior(lam) - self._scale_log_prior(0.0))
        accepted = mh_accept(log_ratio, np.log(open_uniform(self.rng, 1)[0]))
        self.scale_accept += accepted
        if self._adapting():
            self.scale_log_step += self._gain() * (accepted - self.config.target_accept)
        if not accepted:
            return
        g = np.exp(lam)
        self.B *= g
        if self.variant.varying_coreg:
            self.fields[0] += lam
            self.fields[2] += lam
            self.beta_a[0, 0] += lam
            self.beta_a[2, 0] += lam
            if self.variant.bivariate:
                self.fields[1] *= g
                self.beta_a[1] *= g
                self.sigma2_a[1] *= g * g
        else:
            self.a *= g
        self.update_Y()

    def _scale_log_prior(self, lam):
        """Log prior (with Jacobian) of the scaled parameters, as a function of log g."""
        p = self.prior
        g2 = np.exp(2.0 * lam)
        out = -0.5 * g2 * np.sum(self.B * self.B) / p.beta_var + self.mask.sum() * lam
        if not self.variant.varying_coreg:
            a11, a21, a22 = self.a
            out -= 0.5 * g2 * (a11 ** 2 + a22 ** 2) / p.diag_scale ** 2
            out += 2 * lam
            if self.variant.bivariate:
                out -= 0.5 * g2 * a21 ** 2 / p.a21_var
                out += lam
            return out
        for k in (0, 2):
            out -= (self.beta_a[k, 0] + lam) ** 2 / (2.0 * p.sv_beta_var)
        if self.variant.bivariate:
            # field Jacobian g^n cancels the GP normalising constant; the
            # coefficients add g^2 and the variance g^2
            out -= g2 * np.sum(self.beta_a[1] ** 2) / (2.0 * p.sv_beta_var)
            out += (4.0 - 2.0 * (p.sv_sigma2_shape + 1.0)) * lam
            out -= p.sv_sigma2_scale / (g2 * self.sigma2_a[1])
        return out

    def interweave_coreg(self):
        """Redraw A with the effects v = A w held fixed, then map w back.

        A and w are strongly confounded in scale; moving A along the
        alternative parameterisation restores mixing. With A constant the
        diagonals use gamma independence proposals (accepted with the prior
        ratio) and a21 is drawn exactly; with A(s) whole-field shifts are
        used, paired with the intercept of each field's mean.
        """
        a11, a21, a22 = self.coreg_terms()
        v1 = a11 * self.w[0]
        v2 = a21 * self.w[0] + a22 * self.w[1]
        L1, L2 = self.chol
        if self.variant.varying_coreg:
            self._interweave_varying(v1, v2, L1, L2)
        else:
            self._interweave_constant(v1, v2, L1, L2)
        a11, a21, a22 = self.coreg_terms()
        w1 = v1 / a11
        self.w = np.stack([w1, (v2 - a21 * w1) / a22])

    def _gamma_scale_move(self, current, quad, log_h):
        # target a^(-nD) exp(-quad / (2 a^2)) h(a); proposal matches all but h
        shape = 0.5 * (self.n * self.D - 1)
        prop = 1.0 / np.sqrt(self.rng.gamma(shape, 2.0 / quad))
        if mh_accept(log_h(prop) - log_h(current), np.log(open_uniform(self.rng, 1)[0])):
            return prop
        return current

    def _interweave_constant(self, v1, v2, L1, L2):
        p = self.prior
        s2 = p.diag_scale ** 2
        solve = lambda L, M: linalg.solve_triangular(L, M.T, lower=True)
        u1 = solve(L1, v1)
        q11 = np.sum(u1 * u1)
        a11, a21, a22 = self.a
        if self.variant.bivariate:
            c = a21 / a11
            log_h = lambda a: -a * a / (2 * s2) - (c * a) ** 2 / (2 * p.a21_var) + np.log(a)
            new = self._gamma_scale_move(a11, q11, log_h)
            self.a[0], self.a[1] = new, c * new
        else:
            self.a[0] = self._gamma_scale_move(a11, q11, lambda a: -a * a / (2 * s2))
        a11, a21, a22 = self.a
        w1 = v1 / a11
        u2 = solve(L2, v2 - a21 * w1)
        self.a[2] = self._gamma_scale_move(a22, np.sum(u2 * u2), lambda a: -a * a / (2 * s2))
        if self.variant.bivariate:
            a22 = self.a[2]
            g = solve(L2, w1)
            h = solve(L2, v2)
            prec = np.sum(g * g) / a22 ** 2 + 1.0 / p.a21_var
            mean = np.sum(g * h) / a22 ** 2 / prec
            self.a[1] = mean + self.rng.standard_normal() / np.sqrt(prec)

    def _log_effects_density(self, v1, v2, L1, L2, fields):
        """log p(v | A(s)) up to a constant, for v of shape (D, n)."""
        a11, a21, a22 = np.exp(fields[0]), fields[1], np.exp(fields[2])
        w1 = v1 / a11
        w2 = (v2 - a21 * w1) / a22
        u1 = linalg.solve_triangular(L1, w1.T, lower=True)
        u2 = linalg.solve_triangular(L2, w2.T, lower=True)
        return (-self.D * np.sum(fields[0] + fields[2])
                - 0.5 * np.sum(u1 * u1) - 0.5 * np.sum(u2 * u2))

    def _interweave_varying(self, v1, v2, L1, L2):
        rng = self.rng
        vb = self.prior.sv_beta_var
        cur = self._log_effects_density(v1, v2, L1, L2, self.fields)
        for i, k in enumerate((0, 2)):
            delta = np.exp(self.shift_log_step[i]) * rng.standard_normal()
            prop = self.fields.copy()
            prop[k] += delta
            b0 = self.beta_a[k, 0]
            new = self._log_effects_density(v1, v2, L1, L2, prop)
            log_ratio = new - cur - ((b0 + delta) ** 2 - b0 ** 2) / (2 * vb)
            accepted = mh_accept(log_ratio, np.log(open_uniform(rng, 1)[0]))
            if accepted:
                self.fields = prop
                self.beta_a[k, 0] += delta
                cur = new
            if self._adapting():
                self.shift_log_step[i] += self._gain() * (accepted - self.config.target_accept)
        if self.variant.bivariate:
            a11, a21, a22 = self.coreg_terms()
            w1 = v1 / a11
            g = linalg.solve_triangular(L2, (w1 / a22).T, lower=True)
            h = linalg.solve_triangular(L2, ((v2 - a21 * w1) / a22).T, lower=True)
            b0 = self.beta_a[1, 0]
            prec = np.sum(g * g) + 1.0 / vb
            mean = (np.sum(g * h) - b0 / vb) / prec
            delta = mean + rng.standard_normal() / np.sqrt(prec)
            self.fields[1] += delta
            self.beta_a[1, 0] += delta

    def _update_coreg_constant(self, s):
        p = self.prior
        S11, S22, S12, E1, E21, E22 = s
        prec = S11 + 1.0 / p.diag_scale ** 2
        self.a[0] = truncated_normal_positive(E1 / prec, prec, self.rng)
        if self.variant.bivariate:
            prec = S11 + 1.0 / p.a21_var
            self.a[1] = (E21 - self.a[2] * S12) / prec + self.rng.standard_normal() / np.sqrt(prec)
        prec = S22 + 1.0 / p.diag_scale ** 2
        self.a[2] = truncated_normal_positive((E22 - self.a[1] * S12) / prec, prec, self.rng)

    def _update_coreg_varying(self, stats):
        rng = self.rng
        n = self.n
        prior_mean = self.beta_a @ self.Z.T
        active = np.array([1, 1 if self.variant.bivariate else 0, 1], dtype=np.int8)
        normals = rng.standard_normal((3, n))
        log_u = np.log(open_uniform(rng, (3, n)))
        acc = kernels.sv_coreg_sweep(self.fields, prior_mean, self.Ra, self.sigma2_a, stats,
                                     self.sv_log_step, normals, log_u, active)
        self.sv_accept += acc
        if self._adapting():
            self.sv_log_step += self._gain() * (acc - self.config.target_accept) * active[:, None]
        p = self.prior
        ZR = self.Z.T @ self.Ra
        for k in range(3):
            if not active[k]:
                continue
            f = self.fields[k]
            Pk = ZR @ self.Z / self.sigma2_a[k] + np.eye(2) / p.sv_beta_var
            Lk = np.linalg.cholesky(Pk)
            mean = linalg.cho_solve((Lk, True), ZR @ f / self.sigma2_a[k])
            self.beta_a[k] = mean + linalg.solve_triangular(Lk.T, rng.standard_normal(2), lower=False)
            dev = f - self.Z @ self.beta_a[k]
            shape = p.sv_sigma2_shape + 0.5 * n
            scale = p.sv_sigma2_scale + 0.5 * dev @ self.Ra @ dev
            self.sigma2_a[k] = scale / rng.gamma(shape)

    def _adapting(self):
        burn = int(round(self.config.sweeps * self.config.burn_in_fraction))
        return self.config.adapt and self.iteration < burn

    def _gain(self):
        return min(0.5, 5.0 / (self.iteration + 1) ** 0.6)

    def _groups(self):
        return [(0, 1)] if self.n_groups == 1 else [(0,), (1,)]

    def _residual_scatter(self):
        e = (self.Y - self.mu()).reshape(2, self.D, self.n)
        E = np.concatenate([e[0], e[1]], axis=1)
        return E.T @ E

    def _marginal_loglik(self, scatter, cov, a11, a21, a22):
        """Log-density of the residuals Y - mu with the day fields integrated out.

        Each day's stacked residual vector is N(0, (A C A^T) + I) where C is
        block-diagonal in the two processes; ``scatter`` sums e_d e_d^T.
        """
        n = self.n
        d11, d21, d22 = (np.broadcast_to(np.asarray(t, float), (n,)) for t in (a11, a21, a22))
        C1, C2 = cov
        sig = np.empty((2 * n, 2 * n))
        sig[:n, :n] = d11[:, None] * C1 * d11
        sig[:n, n:] = d11[:, None] * C1 * d21
        sig[n:, :n] = sig[:n, n:].T
        sig[n:, n:] = d21[:, None] * C1 * d21 + d22[:, None] * C2 * d22
        sig[np.diag_indices(2 * n)] += 1.0
        try:
            L = np.linalg.cholesky(sig)
        except np.linalg.LinAlgError:
            return -np.inf
        logdet = 2.0 * np.sum(np.log(np.diag(L)))
        return -0.5 * self.D * logdet - 0.5 * np.trace(linalg.cho_solve((L, True), scatter))

    def _collapsed_coreg(self):
        """Metropolis moves on constant A with the day fields integrated out."""
        p = self.prior
        s2 = p.diag_scale ** 2
        scatter = self._residual_scatter()

        def log_post(a):
            out = self._marginal_loglik(scatter, self.cov, *a)
            out += -(a[0] ** 2 + a[2] ** 2) / (2 * s2) + np.log(a[0]) + np.log(a[2])
            if self.variant.bivariate:
                out -= a[1] ** 2 / (2 * p.a21_var)
            return out

        cur = log_post(self.a)
        for k in range(3):
            if k == 1 and not self.variant.bivariate:
                continue
            step = np.exp(self.coreg_log_step[k]) * self.rng.standard_normal()
            prop = self.a.copy()
            prop[k] = prop[k] + step if k == 1 else prop[k] * np.exp(step)
            new = log_post(prop)
            accepted = mh_accept(new - cur, np.log(open_uniform(self.rng, 1)[0]))
            if accepted:
                self.a, cur = prop, new
            self.coreg_accept[k] += accepted
            if self._adapting():
                self.coreg_log_step[k] += self._gain() * (accepted - self.config.target_accept)
        self.update_w()

    def update_ranges(self):
        """Log-scale random-walk Metropolis on the effective ranges.

        The day fields are integrated out of the acceptance ratio and then
        redrawn from their full conditional.
        """
        scatter = self._residual_scatter() if self.D else np.zeros((2 * self.n, 2 * self.n))
        terms = self.coreg_terms()
        for g, procs in enumerate(self._groups()):
            self._range_step(g, procs, scatter, terms, which="space")
            if self.variant.anisotropic:
                self._range_step(g, procs, scatter, terms, which="covariate")
        self.update_w()

    def _range_step(self, g, procs, scatter, terms, which):
        rng = self.rng
        p = self.prior
        j0 = procs[0]
        if which == "space":
            cur, step = self.rho[j0], self.range_log_step[g]
            shape, scale = p.range_shape, p.range_scale
        else:
            cur, step = self.rho_x[j0], self.range_x_log_step[g]
            shape, scale = p.range_x_shape, self.range_x_scale
        prop = cur * np.exp(np.exp(step) * rng.standard_normal())
        cov_new = list(self.cov)
        for j in procs:
            cov_new[j] = self._cov(j, rho=prop) if which == "space" else self._cov(j, rho_x=prop)
        ll_cur = self._marginal_loglik(scatter, self.cov, *terms)
        ll_new = self._marginal_loglik(scatter, cov_new, *terms)
        # log-scale proposal: Jacobian adds log(range)
        log_ratio = (ll_new + log_inv_gamma(prop, shape, scale) + np.log(prop)) - (
            ll_cur + log_inv_gamma(cur, shape, scale) + np.log(cur))
        accepted = mh_accept(log_ratio, np.log(open_uniform(rng, 1)[0]))
        if accepted:
            for j in procs:
                if which == "space":
                    self.rho[j] = prop
                else:
                    self.rho_x[j] = prop
                self._set_kernel(j, cov_new[j])
        if which == "space":
            self.range_accept[g] += accepted
            if self._adapting():
                self.range_log_step[g] += self._gain() * (accepted - self.config.target_accept)
        else:
            self.range_x_accept[g] += accepted
            if self._adapting():
                self.range_x_log_step[g] += self._gain() * (accepted - self.config.target_accept)

    def sweep(self):
        self.update_tied()
        self.update_Y()
        self.update_B()
        self.update_w()
        self.update_coreg()
        self.update_ranges()
        self.iteration += 1
        self._check_finite()

    def _check_finite(self):
        vals = [self.B, self.rho, self.w]
        vals.append(self.fields if self.variant.varying_coreg else self.a)
        if not all(np.all(np.isfinite(v)) for v in vals):
            raise NumericalError(f"non-finite state at sweep {self.iteration}: {self.snapshot()}")

    # -- archive / inspection ----------------------------------------------

    def snapshot(self):
        """Current parameter values on the raw covariate scale."""
        out = {"B": self.B_raw(), "range": self.rho.copy()}
        if self.rho_x is not None:
            out["range_x"] = self.rho_x.copy()
        if self.variant.varying_coreg:
            a11, a21, a22 = self.coreg_terms()
            out["a_fields"] = np.stack([a11, a21, a22])
            out["beta_a"] = self.beta_a.copy()
            out["sigma2_a"] = self.sigma2_a.copy()
        else:
            out["a"] = self.a.copy()
        return out

    def acceptance(self):
        it = max(self.iteration, 1)
        out = {"range": self.range_accept / it}
        if self.variant.anisotropic:
            out["range_x"] = self.range_x_accept / it
        out["scale"] = self.scale_accept / it
        out["coreg"] = (self.sv_accept if self.variant.varying_coreg else self.coreg_accept) / it
        return out

    def simulate_forward(self, rng=None):
        """Regenerate indicators and latents for t >= 2 from the current state.

        Seed-day and first-year indicators are left as they are. Used by the
        joint-distribution (Geweke) test.
        """
        rng = rng or self.rng
        ind = self.ind.copy()
        a11, a21, a22 = self.coreg_terms()
        v = coreg_mod.apply(a11, a21, a22, self.w)  # (2, D, n)
        Y = np.empty((2, self.T - 1, self.L, self.n))
        B = self.B
        st = self.standardizer
        for ti in range(self.T - 1):
            for l in range(self.L):
                lag_max = ind[0, ti + 1, l]
                lag_min = ind[1, ti + 1, l]
                X = design.design_matrix(self.trend[ti], lag_max, lag_min, self.log_dist)
                eta = st.transform(X) @ B.T + v[:, ti * self.L + l, :].T
                y = eta + rng.standard_normal(eta.shape)
                Y[:, ti, l, :] = y.T
                ind[:, ti + 1, l + 1, :] = (y.T > 0)
        self.ind = ind
        self.marks = ind.astype(np.int32)
        self.tied = np.zeros_like(self.tied)
        self.tied_r = self.marks[self.tied]
        self._refresh_design()
        self.Y = Y.reshape(2, -1)


def sample_prior(variant, prior, coords, rng, x=None, range_x_scale=None):
    """One draw of (B, coregionalisation, ranges) from the prior."""
    mask = variant.mask
    B = np.where(mask, np.sqrt(prior.beta_var) * rng.standard_normal((2, design.K)), 0.0)
    a11 = abs(prior.diag_scale * rng.standard_normal())
    a21 = np.sqrt(prior.a21_var) * rng.standard_normal() if variant.bivariate else 0.0
    a22 = abs(prior.diag_scale * rng.standard_normal())
    rho = prior.range_scale / rng.gamma(prior.range_shape)
    out = {"B": B, "a": np.array([a11, a21, a22]), "range": rho}
    if variant.anisotropic:
        out["range_x"] = range_x_scale / rng.gamma(prior.range_x_shape)
    return out


@dataclass
class PosteriorDraws:
    """Thinned draws of every chain.

    ``params`` maps a name to an array of shape (n_chains, n_draws, ...):
    ``B`` (2, 8) on the raw covariate scale, ``range`` (2,), optional
    ``range_x`` (2,), and either ``a`` (3,) = (a11, a21, a22) or
    ``a_fields`` (3, n_sites) with ``beta_a`` (3, 2) and ``sigma2_a`` (3,).
    ``w`` (optional) holds the day fields, shape (n_chains, n_draws, 2, D, n).
    """

    variant: ModelVariant
    params: dict
    sweep_index: np.ndarray
    coords: np.ndarray
    dist_coast: np.ndarray
    x: np.ndarray | None
    T: int
    n_days: int
    w: np.ndarray | None = None
    seeds: tuple = ()
    acceptance: list = field(default_factory=list)
    prior: PriorConfig = field(default_factory=PriorConfig)

    @property
    def n_chains(self):
        return self.sweep_index.shape[0]

    @property
    def n_draws(self):
        return self.sweep_index.shape[1]

    def pooled(self, name):
        arr = self.params[name]
        return arr.reshape((-1,) + arr.shape[2:])

    def pooled_w(self):
        return None if self.w is None else self.w.reshape((-1,) + self.w.shape[2:])

    def coreg_draws(self):
        """(a11, a21, a22) per pooled draw; per-site arrays for varying A."""
        if "a_fields" in self.params:
            f = self.pooled("a_fields")
            return f[:, 0], f[:, 1], f[:, 2]
        a = self.pooled("a")
        return a[:, 0], a[:, 1], a[:, 2]

    def scalar_table(self):
        """Every scalar parameter as name -> (n_chains, n_draws)."""
        out = {}
        B = self.params["B"]
        mask = self.variant.mask
        for j, sig in enumerate(("max", "min")):
            for k, col in enumerate(design.COLUMNS):
                if mask[j, k]:
                    out[f"beta_{sig}.{col}"] = B[:, :, j, k]
        if "a" in self.params:
            a = self.params["a"]
            out["a11"], out["a22"] = a[..., 0], a[..., 2]
            if self.variant.bivariate:
                out["a21"] = a[..., 1]
        else:
            f = self.params["a_fields"]
            names = ("a11", "a21", "a22")
            for k in range(3):
                if k == 1 and not self.variant.bivariate:
                    continue
                for s in range(f.shape[-1]):
                    out[f"{names[k]}[{s}]"] = f[:, :, k, s]
                out[f"beta_{names[k]}.intercept"] = self.params["beta_a"][:, :, k, 0]
                out[f"beta_{names[k]}.log_dist"] = self.params["beta_a"][:, :, k, 1]
                out[f"sigma2_{names[k]}"] = self.params["sigma2_a"][:, :, k]
        rng_ = self.params["range"]
        if self.variant.bivariate:
            out["range"] = rng_[..., 0]
        else:
            out["range_max"], out["range_min"] = rng_[..., 0], rng_[..., 1]
        if "range_x" in self.params:
            rx = self.params["range_x"]
            if self.variant.bivariate:
                out["range_x"] = rx[..., 0]
            else:
                out["range_x_max"], out["range_x_min"] = rx[..., 0], rx[..., 1]
        return out


def run_chain(variant, data, config=None, prior=None, seed=None, rng=None, callback=None):
    """Run one chain; returns a dict of stacked kept draws (and ``w``)."""
    config = config or SamplerConfig()
    if rng is None:
        rng = np.random.default_rng(config.seed if seed is None else seed)
    sampler = Sampler(variant, data, prior=prior, config=config, rng=rng)
    _, kept = config.kept_sweeps()
    keep = np.zeros(config.sweeps, dtype=bool)
    keep[kept] = True
    draws = {}
    ws = []
    for it in range(config.sweeps):
        sampler.sweep()
        if callback is not None:
            callback(sampler)
        if keep[it]:
            for name, val in sampler.snapshot().items():
                draws.setdefault(name, []).append(val)
            if config.archive_w:
                ws.append(sampler.w.copy())
    out = {name: np.array(vals) for name, vals in draws.items()}
    out["_sweeps"] = kept
    out["_w"] = np.array(ws) if config.archive_w else None
    out["_acceptance"] = sampler.acceptance()
    out["_standardizer"] = sampler.standardizer
    return out


def chain_rngs(seed, n_chains):
    """Independent generators for each chain from one 64-bit seed."""
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n_chains)]


def run_chains(variant, data, config=None, prior=None):
    """Run ``config.n_chains`` chains with independent streams."""
    config = config or SamplerConfig()
    prior = prior or PriorConfig()
    if variant.stationary:
        raise ValueError("M0 is analytic; use stationary_probabilities instead")
    rngs = chain_rngs(config.seed, config.n_chains)

    def job(r):
        return run_chain(variant, data, config=config, prior=prior, rng=r)

    if config.threads > 1 and config.n_chains > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as ex:
            results = list(ex.map(job, rngs))
    else:
        results = [job(r) for r in rngs]
    names = [k for k in results[0] if not k.startswith("_")]
    params = {k: np.stack([r[k] for r in results]) for k in names}
    w = np.stack([r["_w"] for r in results]) if config.archive_w else None
    return PosteriorDraws(
        variant=variant,
        params=params,
        sweep_index=np.stack([r["_sweeps"] for r in results]),
        coords=np.asarray(data.coords, float),
        dist_coast=np.asarray(data.dist_coast, float),
        x=None if data.x is None else np.asarray(data.x, float),
        T=data.T,
        n_days=data.n_days,
        w=w,
        seeds=(config.seed,),
        acceptance=[r["_acceptance"] for r in results],
        prior=prior,
    )


def stationary_probabilities(T):
    """Record probabilities 1/t of the stationary model for t = 1..T."""
    return 1.0 / np.arange(1, T + 1)
