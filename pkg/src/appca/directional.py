"""Directional statistics: orthonormal complements, Bingham sampling and the
angular orthonormality loss."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .model import FeatureAssignments, Hyperparameters, ObservationSet

log = logging.getLogger(__name__)

MAX_REJECTIONS = 1000


@dataclass
class BinghamParameter:
    """Symmetric matrix ``a`` of the density exp(v^T a v) on the unit sphere."""

    a: np.ndarray

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.a, dtype=float))
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError(f"Bingham parameter must be square, got {a.shape}")
        self.a = 0.5 * (a + a.T)

    @property
    def dim(self) -> int:
        return self.a.shape[0]


def _fix_signs(B: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    for j in range(B.shape[1]):
        nz = np.flatnonzero(np.abs(B[:, j]) > tol)
        if nz.size and B[nz[0], j] < 0:
            B[:, j] = -B[:, j]
    return B


def orthonormal_complement(W) -> np.ndarray:
    """Orthonormal basis B (D x (D - K)) of the directions orthogonal to W.

    Uses a complete QR decomposition; each returned column has its first
    nonzero entry positive so the result is a deterministic function of W.
    """
    W = np.asarray(W, dtype=float)
    if W.ndim == 1:
        W = W[:, None]
    D, K = W.shape
    if K >= D:
        raise ValueError(f"no free directions: W already has {K} columns in dimension {D}")
    if K == 0:
        return np.eye(D)
    if np.max(np.abs(W.T @ W - np.eye(K))) > 1e-6:
        raise ValueError("W must have orthonormal columns")
    Q, _ = np.linalg.qr(W, mode="complete")
    B = Q[:, K:]
    # one projection pass removes the QR round-off against W
    B = B - W @ (W.T @ B)
    B, _ = np.linalg.qr(B)
    return _fix_signs(B)


def _solve_envelope_b(mu: np.ndarray) -> float:
    q = mu.size
    f = lambda b: np.sum(1.0 / (b + 2.0 * mu)) - 1.0
    if f(q) >= 0:
        return float(q)
    return brentq(f, 1e-12, q, xtol=1e-14, rtol=1e-14)


def _sphere_gibbs(mu, u, rng, sweeps=50, grid=2048):
    """Pairwise rotation Gibbs sampler for exp(-sum mu_i u_i^2) on the sphere."""
    q = mu.size
    theta = np.linspace(0.0, 2 * np.pi, grid, endpoint=False)
    c2, s2 = np.cos(theta) ** 2, np.sin(theta) ** 2
    for _ in range(sweeps):
        for i in range(q - 1):
            j = int(rng.integers(i + 1, q))
            r2 = u[i] ** 2 + u[j] ** 2
            logp = -r2 * (mu[i] * c2 + mu[j] * s2)
            p = np.exp(logp - logp.max())
            cdf = np.cumsum(p)
            t = theta[np.searchsorted(cdf, rng.random() * cdf[-1])]
            r = np.sqrt(r2)
            u[i], u[j] = r * np.cos(t), r * np.sin(t)
    return u / np.linalg.norm(u)


def sample_bingham(
    param, rng: np.random.Generator, batch: int = 8, size: int | None = None
) -> np.ndarray:
    """Draw unit vectors with density proportional to exp(v^T A v).

    Exact rejection sampler with an angular central Gaussian envelope. The
    parameter is shifted so its largest eigenvalue is zero, which leaves the
    distribution unchanged. Returns one vector, or a ``(size, q)`` array of
    independent draws when ``size`` is given.
    """
    A = param.a if isinstance(param, BinghamParameter) else BinghamParameter(param).a
    q = A.shape[0]
    if q == 0:
        raise ValueError("cannot sample from a zero-dimensional sphere")
    if not np.all(np.isfinite(A)):
        raise ValueError("Bingham parameter has non-finite entries")
    m = 1 if size is None else int(size)
    if q == 1:
        out = np.where(rng.random((m, 1)) < 0.5, 1.0, -1.0)
        return out[0] if size is None else out

    lam, V = np.linalg.eigh(A)
    mu = np.maximum(lam.max() - lam, 0.0)
    if np.all(mu == 0):
        v = rng.standard_normal((m, q))
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        return v[0] if size is None else v

    b = _solve_envelope_b(mu)
    omega = 1.0 + 2.0 * mu / b
    log_bound = (q - b) / 2.0 + (q / 2.0) * np.log(b / q)
    scale = 1.0 / np.sqrt(omega)
    out = np.empty((m, q))
    for i in range(m):
        tries = 0
        while tries < MAX_REJECTIONS:
            y = rng.standard_normal((batch, q)) * scale
            u = y / np.linalg.norm(y, axis=1, keepdims=True)
            log_ratio = -(u**2) @ mu + (q / 2.0) * np.log((u**2) @ omega) + log_bound
            accept = np.log(rng.random(batch)) < log_ratio
            if accept.any():
                out[i] = u[np.argmax(accept)]
                break
            tries += batch
        else:
            log.warning("Bingham rejection sampler fell back to Gibbs after %d rejections", tries)
            out[i] = _sphere_gibbs(mu, u[-1].copy(), rng)
    out = out @ V.T
    return out[0] if size is None else out


def collapsed_column_parameter(
    j: int,
    Y: ObservationSet,
    Z: FeatureAssignments,
    hyper: Hyperparameters,
    B: np.ndarray | None = None,
    scatter: np.ndarray | None = None,
) -> BinghamParameter:
    """Bingham parameter of the j-th (0-based) column in the collapsed sweep.

    sigma_v * sum_n y_n y_n^T + sx2 / (2 sy2 (sx2 + sy2)) * sum_n z_jn y_n y_n^T,
    projected by B^T ... B for every column after the first.
    """
    Ym = Y.data if isinstance(Y, ObservationSet) else np.asarray(Y, dtype=float)
    Zm = Z.z if isinstance(Z, FeatureAssignments) else np.asarray(Z)
    if not 0 <= j < Zm.shape[0]:
        raise ValueError(f"feature index {j} out of range for K = {Zm.shape[0]}")
    if Zm.shape[1] != Ym.shape[1]:
        raise ValueError("Z and Y disagree on the number of points")
    S = Ym @ Ym.T if scatter is None else scatter
    sx2, sy2 = hyper.sigma_x**2, hyper.sigma_y**2
    coef = sx2 / (2.0 * sy2 * (sx2 + sy2))
    Yj = Ym[:, Zm[j].astype(bool)]
    A = hyper.sigma_v * S + coef * (Yj @ Yj.T)
    if j > 0 and B is not None:
        if B.shape[0] != Ym.shape[0]:
            raise ValueError(f"complement has {B.shape[0]} rows, data has {Ym.shape[0]}")
        A = B.T @ A @ B
    return BinghamParameter(A)


def orthonormality_loss(W) -> float:
    """Largest deviation from 90 degrees over all pairs of columns of W."""
    W = np.asarray(W, dtype=float)
    if W.ndim != 2:
        raise ValueError("W must be a matrix")
    K = W.shape[1]
    if K < 2:
        return 0.0
    norms = np.linalg.norm(W, axis=0)
    if np.any(norms == 0):
        raise ValueError("orthonormality loss is undefined for a zero column")
    U = W / norms
    cos = np.clip(np.abs(U.T @ U), 0.0, 1.0)
    iu = np.triu_indices(K, 1)
    angles = np.degrees(np.arccos(cos[iu]))
    return float(np.max(90.0 - angles))
