# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels. Mirrors ``recordbreak._pycore`` function by function."""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, isnan, INFINITY
from scipy.special.cython_special cimport log_ndtr, ndtr, ndtri_exp

cnp.import_array()

cdef double P_FLOOR = 1e-300
cdef double P_CEIL = 1.0 - 2.0 ** -53


def record_marks(values):
    cdef double[:, :] x = np.ascontiguousarray(values, dtype=np.float64)
    cdef Py_ssize_t T = x.shape[0], m = x.shape[1], t, j
    out = np.zeros((T, m), dtype=np.int32)
    if T == 0:
        return out
    cdef int[:, :] marks = out
    cdef double[:] run_max = np.empty(m, dtype=np.float64)
    cdef int[:] count = np.zeros(m, dtype=np.int32)
    cdef double val
    for j in range(m):
        marks[0, j] = 1
        if isnan(x[0, j]):
            run_max[j] = -INFINITY
            count[j] = 0
        else:
            run_max[j] = x[0, j]
            count[j] = 1
    for t in range(1, T):
        for j in range(m):
            val = x[t, j]
            if isnan(val):
                continue
            if val > run_max[j]:
                marks[t, j] = 1
                run_max[j] = val
                count[j] = 1
            elif val == run_max[j]:
                count[j] += 1
                marks[t, j] = count[j]
    return out


def truncnorm_latent(eta, positive, u):
    cdef double[:] e = np.ascontiguousarray(eta, dtype=np.float64).ravel()
    cdef cnp.int8_t[:] pos = np.ascontiguousarray(np.asarray(positive) != 0, dtype=np.int8).ravel()
    cdef double[:] uu = np.ascontiguousarray(u, dtype=np.float64).ravel()
    cdef Py_ssize_t n = e.shape[0], i
    out = np.empty(n, dtype=np.float64)
    cdef double[:] y = out
    cdef double sign, z
    with nogil:
        for i in range(n):
            sign = 1.0 if pos[i] else -1.0
            z = ndtri_exp(log(uu[i]) + log_ndtr(sign * e[i]))
            y[i] = e[i] - sign * z
    return out.reshape(np.shape(eta))


def simulate_days(coef, lag0, log_dist, double trend, v, u):
    cdef double[:, :] b = np.ascontiguousarray(coef, dtype=np.float64)
    cdef double[:, :] lag_init = np.ascontiguousarray(lag0, dtype=np.float64)
    cdef double[:] ld = np.ascontiguousarray(log_dist, dtype=np.float64)
    cdef double[:, :, :] vv = np.ascontiguousarray(v, dtype=np.float64)
    cdef double[:, :, :] uu = np.ascontiguousarray(u, dtype=np.float64)
    cdef Py_ssize_t L = vv.shape[0], C = vv.shape[1], day, c, j
    prob_arr = np.empty((L, C, 2), dtype=np.float64)
    ind_arr = np.empty((L, C, 2), dtype=np.int8)
    cdef double[:, :, :] prob = prob_arr
    cdef cnp.int8_t[:, :, :] ind = ind_arr
    cdef double[:, :] lag = np.array(lag_init, dtype=np.float64)
    cdef double base, eta, p
    cdef double lag_max, lag_min
    with nogil:
        for c in range(C):
            lag_max = lag[c, 0]
            lag_min = lag[c, 1]
            for day in range(L):
                for j in range(2):
                    base = b[j, 0] + ld[c] * b[j, 3] + trend * b[j, 4]
                    base = base + trend * (ld[c] * b[j, 7])
                    eta = (base
                           + lag_max * (b[j, 1] + trend * b[j, 5])
                           + lag_min * (b[j, 2] + trend * b[j, 6])
                           + vv[day, c, j])
                    p = ndtr(eta)
                    if p < P_FLOOR:
                        p = P_FLOOR
                    elif p > P_CEIL:
                        p = P_CEIL
                    prob[day, c, j] = p
                    ind[day, c, j] = 1 if uu[day, c, j] < p else 0
                lag_max = ind[day, c, 0]
                lag_min = ind[day, c, 1]
    return prob_arr, ind_arr


cdef inline double _site_loglik(int field, Py_ssize_t s, double[:, :] f, double[:, :] st) noexcept nogil:
    cdef double a11, a21, a22
    if field == 0:
        a11 = exp(f[0, s])
        return -0.5 * (a11 * a11 * st[0, s] - 2.0 * a11 * st[3, s])
    a21 = f[1, s]
    a22 = exp(f[2, s])
    return -0.5 * (a21 * a21 * st[0, s] + a22 * a22 * st[1, s]
                   + 2.0 * a21 * a22 * st[2, s]
                   - 2.0 * a21 * st[4, s] - 2.0 * a22 * st[5, s])


def sv_coreg_sweep(fields, prior_mean, prec, sigma2, stats, log_step, normals, log_u, active):
    cdef double[:, :] f = fields
    cdef double[:, :] m = np.ascontiguousarray(prior_mean, dtype=np.float64)
    cdef double[:, :] q = np.ascontiguousarray(prec, dtype=np.float64)
    cdef double[:] s2 = np.ascontiguousarray(sigma2, dtype=np.float64)
    cdef double[:, :] st = np.ascontiguousarray(stats, dtype=np.float64)
    cdef double[:, :] ls = np.ascontiguousarray(log_step, dtype=np.float64)
    cdef double[:, :] nz = np.ascontiguousarray(normals, dtype=np.float64)
    cdef double[:, :] lu = np.ascontiguousarray(log_u, dtype=np.float64)
    act = np.asarray(active, dtype=np.int8)
    cdef cnp.int8_t[:] ac = act
    cdef Py_ssize_t n = f.shape[1], k, s, j
    acc_arr = np.zeros((3, n), dtype=np.int8)
    cdef cnp.int8_t[:, :] acc = acc_arr
    cdef double q_ss, cross, cmean, cvar, old, new, ll_old, ll_new, lp_old, lp_new
    with nogil:
        for k in range(3):
            if not ac[k]:
                continue
            for s in range(n):
                q_ss = q[s, s]
                cross = 0.0
                for j in range(n):
                    cross = cross + q[s, j] * (f[k, j] - m[k, j])
                cross = cross - q_ss * (f[k, s] - m[k, s])
                cmean = m[k, s] - cross / q_ss
                cvar = s2[k] / q_ss
                old = f[k, s]
                new = old + exp(ls[k, s]) * nz[k, s]
                ll_old = _site_loglik(k, s, f, st)
                lp_old = -0.5 * (old - cmean) * (old - cmean) / cvar
                f[k, s] = new
                ll_new = _site_loglik(k, s, f, st)
                lp_new = -0.5 * (new - cmean) * (new - cmean) / cvar
                if lu[k, s] < (ll_new + lp_new) - (ll_old + lp_old):
                    acc[k, s] = 1
                else:
                    f[k, s] = old
    return acc_arr
