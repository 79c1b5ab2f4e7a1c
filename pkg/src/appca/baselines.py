"""Reference reducers: PCA, probabilistic PCA (EM) and mixtures of PPCA."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp
from scipy.stats import multivariate_normal

from .model import LOG_2PI, ObservationSet

log = logging.getLogger(__name__)


def _data(Y) -> np.ndarray:
    return Y.data if isinstance(Y, ObservationSet) else np.asarray(Y, dtype=float)


@dataclass
class PcaResult:
    basis: np.ndarray
    reconstruction: np.ndarray
    singular_values: np.ndarray


def pca_fit(Y, K: int) -> PcaResult:
    """Top-K principal directions of centered D x N data via the SVD."""
    Ym = _data(Y)
    D, N = Ym.shape
    if not 1 <= K <= min(D, N):
        raise ValueError(f"K must lie in [1, {min(D, N)}], got {K}")
    U, s, _ = np.linalg.svd(Ym, full_matrices=False)
    basis = U[:, :K]
    return PcaResult(basis, basis @ (basis.T @ Ym), s)


@dataclass
class PpcaResult:
    W: np.ndarray
    sigma2: float
    mean: np.ndarray
    log_likelihood: float
    trace: list = field(default_factory=list)
    converged: bool = True

    def log_density(self, y) -> float:
        return ppca_log_density(y, self.W, self.sigma2, self.mean)


def ppca_log_density(y, W, sigma2: float, mean=None) -> float:
    """log N(y; mean, W W^T + sigma2 I) by direct dense evaluation."""
    W = np.asarray(W, dtype=float)
    D = W.shape[0]
    mean = np.zeros(D) if mean is None else mean
    return float(multivariate_normal.logpdf(y, mean=mean, cov=W @ W.T + sigma2 * np.eye(D)))


def _ppca_loglik(S, W, sigma2, N):
    D = S.shape[0]
    C = W @ W.T + sigma2 * np.eye(D)
    sign, logdet = np.linalg.slogdet(C)
    return -0.5 * N * (D * LOG_2PI + logdet + np.trace(np.linalg.solve(C, S)))


def _ppca_closed_form(S, K):
    """Maximum-likelihood PPCA parameters for sample covariance S."""
    lam, U = np.linalg.eigh(S)
    lam, U = lam[::-1], U[:, ::-1]
    D = S.shape[0]
    sigma2 = float(np.mean(lam[K:])) if K < D else 0.0
    sigma2 = max(sigma2, 1e-12)
    W = U[:, :K] * np.sqrt(np.maximum(lam[:K] - sigma2, 0.0))
    return W, sigma2


def ppca_em_fit(Y, K: int, iters: int = 500, tol: float = 1e-10, seed: int = 0) -> PpcaResult:
    """Tipping-Bishop EM for probabilistic PCA on D x N data."""
    Ym = _data(Y)
    D, N = Ym.shape
    if not 1 <= K < D:
        raise ValueError(f"K must lie in [1, {D - 1}], got {K}")
    mean = Ym.mean(axis=1)
    Yc = Ym - mean[:, None]
    S = Yc @ Yc.T / N
    rng = np.random.default_rng(seed)
    W = rng.standard_normal((D, K))
    sigma2 = float(np.trace(S) / D)
    trace = [_ppca_loglik(S, W, sigma2, N)]
    converged = False
    for _ in range(iters):
        M = W.T @ W + sigma2 * np.eye(K)
        SW = S @ W
        W_new = SW @ np.linalg.inv(sigma2 * np.eye(K) + np.linalg.solve(M, W.T @ SW))
        sigma2 = float(np.trace(S - SW @ np.linalg.solve(M, W_new.T)) / D)
        W = W_new
        trace.append(_ppca_loglik(S, W, sigma2, N))
        if abs(trace[-1] - trace[-2]) <= tol * abs(trace[-1]):
            converged = True
            break
    if not converged:
        log.info("PPCA EM did not converge in %d iterations", iters)
    return PpcaResult(W, sigma2, mean, trace[-1], trace, converged)


@dataclass
class MppcaModel:
    component_weights: np.ndarray  # (M,)
    component_means: np.ndarray  # (M, D)
    component_bases: np.ndarray  # (M, D, K)
    component_noise: np.ndarray  # (M,)
    log_likelihood_trace: list = field(default_factory=list)

    def __post_init__(self):
        if abs(self.component_weights.sum() - 1.0) > 1e-10:
            raise ValueError("component weights must sum to one")
        if np.any(self.component_noise <= 0):
            raise ValueError("noise variances must be positive")

    @property
    def log_likelihood(self) -> float:
        return self.log_likelihood_trace[-1]


def _component_log_probs(Yt, weights, means, bases, noise):
    """N x M matrix of log pi_i + log N(y_n; mu_i, C_i)."""
    N, D = Yt.shape
    M = weights.size
    out = np.empty((N, M))
    for i in range(M):
        C = bases[i] @ bases[i].T + noise[i] * np.eye(D)
        L = np.linalg.cholesky(C)
        R = np.linalg.solve(L, (Yt - means[i]).T)
        out[:, i] = (
            np.log(weights[i])
            - 0.5 * (D * LOG_2PI + 2 * np.sum(np.log(np.diag(L))))
            - 0.5 * np.sum(R * R, axis=0)
        )
    return out


def mppca_responsibilities(model: MppcaModel, Y) -> np.ndarray:
    lp = _component_log_probs(
        _data(Y).T,
        model.component_weights,
        model.component_means,
        model.component_bases,
        model.component_noise,
    )
    return np.exp(lp - logsumexp(lp, axis=1, keepdims=True))


def mppca_reconstruct(model: MppcaModel, Y) -> np.ndarray:
    """Posterior-mean reconstruction under each point's most responsible component."""
    Ym = _data(Y)
    labels = np.argmax(mppca_responsibilities(model, Y), axis=1)
    out = np.empty_like(Ym)
    K = model.component_bases.shape[2]
    for i in np.unique(labels):
        cols = labels == i
        W, mu, s2 = model.component_bases[i], model.component_means[i], model.component_noise[i]
        Mi = W.T @ W + s2 * np.eye(K)
        dev = Ym[:, cols] - mu[:, None]
        out[:, cols] = mu[:, None] + W @ np.linalg.solve(Mi, W.T @ dev)
    return out


def _kmeanspp(Yt, M, rng):
    N = Yt.shape[0]
    centers = [Yt[rng.integers(N)]]
    for _ in range(1, M):
        d2 = np.min([np.sum((Yt - c) ** 2, axis=1) for c in centers], axis=0)
        p = d2 / d2.sum() if d2.sum() > 0 else np.full(N, 1.0 / N)
        centers.append(Yt[rng.choice(N, p=p)])
    return np.array(centers)


def _mppca_single(Yt, M, K, iters, tol, rng):
    N, D = Yt.shape
    centers = _kmeanspp(Yt, M, rng)
    d2 = ((Yt[:, None, :] - centers[None]) ** 2).sum(axis=2)
    R = np.zeros((N, M))
    R[np.arange(N), np.argmin(d2, axis=1)] = 1.0
    trace = []
    weights = means = bases = noise = None
    for it in range(iters + 1):
        # M-step: closed-form PPCA fit of each responsibility-weighted covariance
        Nk = R.sum(axis=0)
        for i in np.flatnonzero(Nk < 1e-8):
            if weights is None:
                worst = int(rng.integers(N))
            else:
                recon_err = _component_log_probs(Yt, weights, means, bases, noise).max(axis=1)
                worst = int(np.argmin(recon_err))
            log.info("MPPCA component %d empty; re-seeded from point %d", i, worst)
            R[worst] = 0.0
            R[worst, i] = 1.0
            Nk = R.sum(axis=0)
        weights = Nk / N
        means = (R.T @ Yt) / Nk[:, None]
        bases = np.empty((M, D, K))
        noise = np.empty(M)
        for i in range(M):
            dev = Yt - means[i]
            S = (dev * R[:, i : i + 1]).T @ dev / Nk[i]
            bases[i], noise[i] = _ppca_closed_form(S, K)
        lp = _component_log_probs(Yt, weights, means, bases, noise)
        ll = float(logsumexp(lp, axis=1).sum())
        trace.append(ll)
        R = np.exp(lp - logsumexp(lp, axis=1, keepdims=True))
        if it > 0 and abs(trace[-1] - trace[-2]) <= tol * abs(trace[-1]):
            break
    weights = weights / weights.sum()
    return MppcaModel(weights, means, bases, noise, trace)


def mppca_em_fit(
    Y,
    M: int,
    K: int,
    iters: int = 200,
    restarts: int = 10,
    seed: int = 0,
    tol: float = 1e-10,
) -> MppcaModel:
    """EM for a mixture of M probabilistic PCA models with K latent dims each.

    Means are seeded k-means++ style; the best of ``restarts`` runs by final
    log likelihood is returned.
    """
    Yt = _data(Y).T
    N, D = Yt.shape
    if M < 1:
        raise ValueError("M must be at least 1")
    if not 1 <= K < D:
        raise ValueError(f"K must lie in [1, {D - 1}], got {K}")
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(restarts):
        model = _mppca_single(Yt, M, K, iters, tol, rng)
        if best is None or model.log_likelihood > best.log_likelihood:
            best = model
    return best
