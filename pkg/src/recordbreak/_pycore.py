"""Pure-Python (numpy) versions of the hot kernels.

Every function here has a twin with the same name and signature in the
compiled ``_core`` extension. Both receive all randomness as pre-drawn
uniforms/normals so the two backends follow the same path given one RNG.
"""
import numpy as np
from scipy.special import log_ndtr, ndtr, ndtri_exp

P_FLOOR = 1e-300
P_CEIL = 1.0 - 2.0 ** -53


def record_marks(values):
    """Calendar-day record marks for a (years, series) block.

    Parameters
    ----------
    values : ndarray, shape (T, m)
        One column per (day, site) series; NaN marks a missing value.

    Returns
    -------
    ndarray of int32, shape (T, m)
        0 = no record, 1 = record, r >= 2 = r-tied record.
    """
    values = np.asarray(values, dtype=np.float64)
    T, m = values.shape
    marks = np.zeros((T, m), dtype=np.int32)
    if T == 0:
        return marks
    marks[0] = 1
    present = ~np.isnan(values[0])
    run_max = np.where(present, values[0], -np.inf)
    count = present.astype(np.int32)
    for t in range(1, T):
        x = values[t]
        present = ~np.isnan(x)
        new = present & (x > run_max)
        tie = present & (x == run_max)
        count[tie] += 1
        marks[t, tie] = count[tie]
        marks[t, new] = 1
        run_max[new] = x[new]
        count[new] = 1
    return marks


def truncnorm_latent(eta, positive, u):
    """Draw Y ~ N(eta, 1) truncated to Y > 0 (positive) or Y <= 0.

    Inverse-CDF on the log scale, so it stays exact far into both tails.
    ``u`` must lie strictly inside (0, 1).
    """
    eta = np.asarray(eta, dtype=np.float64)
    sign = np.where(np.asarray(positive) != 0, 1.0, -1.0)
    z = ndtri_exp(np.log(u) + log_ndtr(sign * eta))
    return eta - sign * z


def simulate_days(coef, lag0, log_dist, trend, v, u):
    """Day-sequential simulation of bivariate record indicators.

    Parameters
    ----------
    coef : (2, 8) coefficients on the raw covariate scale.
    lag0 : (C, 2) seed-day indicators.
    log_dist : (C,) values of log(1 + distance to coast).
    trend : float, probit(1/t) for the simulated year.
    v : (L, C, 2) random effects per day.
    u : (L, C, 2) uniforms used for the Bernoulli draws.
    """
    coef = np.asarray(coef, dtype=np.float64)
    L, C, _ = v.shape
    prob = np.empty((L, C, 2), dtype=np.float64)
    ind = np.empty((L, C, 2), dtype=np.int8)
    lag = np.asarray(lag0, dtype=np.float64).copy()
    base = coef[:, 0][None, :] + np.outer(log_dist, coef[:, 3]) + trend * coef[:, 4][None, :]
    base = base + trend * np.outer(log_dist, coef[:, 7])
    for day in range(L):
        eta = (
            base
            + np.outer(lag[:, 0], coef[:, 1] + trend * coef[:, 5])
            + np.outer(lag[:, 1], coef[:, 2] + trend * coef[:, 6])
            + v[day]
        )
        p = np.clip(ndtr(eta), P_FLOOR, P_CEIL)
        prob[day] = p
        ind[day] = u[day] < p
        lag = ind[day].astype(np.float64)
    return prob, ind


def _site_loglik(field, s, f, stats):
    a11 = np.exp(f[0, s])
    a21 = f[1, s]
    a22 = np.exp(f[2, s])
    if field == 0:
        return -0.5 * (a11 * a11 * stats[0, s] - 2.0 * a11 * stats[3, s])
    return -0.5 * (
        a21 * a21 * stats[0, s]
        + a22 * a22 * stats[1, s]
        + 2.0 * a21 * a22 * stats[2, s]
        - 2.0 * a21 * stats[4, s]
        - 2.0 * a22 * stats[5, s]
    )


def sv_coreg_sweep(fields, prior_mean, prec, sigma2, stats, log_step, normals, log_u, active):
    """One random-walk Metropolis pass over every site of the coregionalisation fields.

    ``fields`` rows are (log a11, a21, log a22) and are updated in place.
    ``prec`` is the inverse of the shared unit-variance correlation matrix,
    so the conditional prior of site s is Gaussian with mean
    ``m_s - sum_{j != s} prec[s, j] (f_j - m_j) / prec[s, s]`` and variance
    ``sigma2 / prec[s, s]``. Returns a (3, n) int8 acceptance mask.
    """
    n = fields.shape[1]
    accepted = np.zeros((3, n), dtype=np.int8)
    for k in range(3):
        if not active[k]:
            continue
        for s in range(n):
            q_ss = prec[s, s]
            dev = fields[k] - prior_mean[k]
            cross = prec[s] @ dev - q_ss * dev[s]
            cmean = prior_mean[k, s] - cross / q_ss
            cvar = sigma2[k] / q_ss
            old = fields[k, s]
            new = old + np.exp(log_step[k, s]) * normals[k, s]
            ll_old = _site_loglik(k, s, fields, stats)
            lp_old = -0.5 * (old - cmean) ** 2 / cvar
            fields[k, s] = new
            ll_new = _site_loglik(k, s, fields, stats)
            lp_new = -0.5 * (new - cmean) ** 2 / cvar
            if log_u[k, s] < (ll_new + lp_new) - (ll_old + lp_old):
                accepted[k, s] = 1
            else:
                fields[k, s] = old
    return accepted
