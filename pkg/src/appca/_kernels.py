"""Compiled inner loops for the per-point feature-indicator updates.

Each kernel resamples every z_kn of one point in ascending k, mutating the
indicator column and the cached counts in place. Uniform draws are supplied
by the caller so the random stream stays in numpy.
"""

import numpy as np
from numba import njit

LOG_2PI = np.log(2.0 * np.pi)


@njit(cache=True)
def _prior_log_odds(m_minus, N):
    return np.log(m_minus) - np.log(N - m_minus)


@njit(cache=True)
def collapsed_point_update(z, counts, proj, u, N, half_coef, log_penalty):
    """Orthonormal basis: the log-likelihood is additive over features."""
    for k in range(z.shape[0]):
        m = counts[k] - z[k]
        new = 0
        if m > 0:
            lo = _prior_log_odds(m, N) + half_coef * proj[k] * proj[k] - log_penalty
            if u[k] * (1.0 + np.exp(-lo)) < 1.0:
                new = 1
        counts[k] += new - z[k]
        z[k] = new


@njit(cache=True)
def _woodbury_loglik(G, b, yy, z, sx2, sy2, D):
    K = z.shape[0]
    idx = np.empty(K, dtype=np.int64)
    ka = 0
    for k in range(K):
        if z[k] == 1:
            idx[ka] = k
            ka += 1
    if ka == 0:
        return -0.5 * (D * LOG_2PI + D * np.log(sy2) + yy / sy2)
    L = np.zeros((ka, ka))
    ratio = sy2 / sx2
    for i in range(ka):
        for j in range(i + 1):
            s = G[idx[i], idx[j]]
            if i == j:
                s += ratio
            for t in range(j):
                s -= L[i, t] * L[j, t]
            if i == j:
                L[i, i] = np.sqrt(s)
            else:
                L[i, j] = s / L[j, j]
    c = np.empty(ka)
    logdet_m = 0.0
    cc = 0.0
    for i in range(ka):
        s = b[idx[i]]
        for t in range(i):
            s -= L[i, t] * c[t]
        c[i] = s / L[i, i]
        cc += c[i] * c[i]
        logdet_m += 2.0 * np.log(L[i, i])
    logdet = D * np.log(sy2) + logdet_m + ka * np.log(sx2 / sy2)
    return -0.5 * (D * LOG_2PI + logdet + (yy - cc) / sy2)


@njit(cache=True)
def hybrid_point_update_marginal(z, counts, G, b, yy, u, N, sx2, sy2, D):
    """General basis: collapsed marginal likelihood via the Woodbury identity."""
    for k in range(z.shape[0]):
        m = counts[k] - z[k]
        old = z[k]
        new = 0
        if m > 0:
            z[k] = 1
            l1 = _woodbury_loglik(G, b, yy, z, sx2, sy2, D)
            z[k] = 0
            l0 = _woodbury_loglik(G, b, yy, z, sx2, sy2, D)
            lo = _prior_log_odds(m, N) + l1 - l0
            if u[k] * (1.0 + np.exp(-lo)) < 1.0:
                new = 1
        z[k] = new
        counts[k] += new - old


@njit(cache=True)
def hybrid_point_update_conditional(z, counts, W, x, r, u, N, sy2):
    """General basis: point likelihood at the current latents.

    ``r`` holds the residual y - W (x * z) and is kept current.
    """
    D = W.shape[0]
    for k in range(z.shape[0]):
        m = counts[k] - z[k]
        old = z[k]
        # residual with feature k switched off
        if old == 1:
            for d in range(D):
                r[d] += x[k] * W[d, k]
        new = 0
        if m > 0:
            # |r_off|^2 - |r_on|^2 with r_on = r_off - x_k w_k
            delta = 0.0
            for d in range(D):
                wk = x[k] * W[d, k]
                delta += 2.0 * r[d] * wk - wk * wk
            lo = _prior_log_odds(m, N) + delta / (2.0 * sy2)
            if u[k] * (1.0 + np.exp(-lo)) < 1.0:
                new = 1
        if new == 1:
            for d in range(D):
                r[d] -= x[k] * W[d, k]
        z[k] = new
        counts[k] += new - old
