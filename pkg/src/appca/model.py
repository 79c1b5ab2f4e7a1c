"""Core data types and likelihoods for adaptive probabilistic PCA.

Observations are stored as a D x N matrix (dimensions by points). A point
``y_n`` is modelled as ``W (x_n * z_n) + eps`` with isotropic noise, where
``z_n`` is a binary mask selecting the active 1-D subspaces (columns of W).
All likelihoods are returned in log space.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

LOG_2PI = np.log(2.0 * np.pi)
JITTER = 1e-10


class DegenerateScaleError(ValueError):
    """Raised when a covariance is singular because a scale collapsed to zero."""


@dataclass
class ObservationSet:
    """Centered D x N data together with the removed mean."""

    data: np.ndarray
    column_mean: np.ndarray

    @property
    def D(self) -> int:
        return self.data.shape[0]

    @property
    def N(self) -> int:
        return self.data.shape[1]

    def uncentered(self, matrix: np.ndarray | None = None) -> np.ndarray:
        """Add the removed mean back to ``matrix`` (defaults to the data)."""
        m = self.data if matrix is None else matrix
        return m + self.column_mean[:, None]


@dataclass
class Hyperparameters:
    alpha: float = 1.0
    sigma_x: float = 1.0
    sigma_y: float = 1.0
    sigma_v: float = 1.0

    def __post_init__(self):
        for name in ("alpha", "sigma_x", "sigma_y", "sigma_v"):
            value = float(getattr(self, name))
            if not np.isfinite(value) or value <= 0:
                raise ValueError(f"{name} must be positive and finite, got {value}")
            setattr(self, name, value)


@dataclass
class FeatureAssignments:
    """Binary K x N activation matrix with cached per-feature counts."""

    z: np.ndarray
    counts: np.ndarray = None

    def __post_init__(self):
        self.z = np.asarray(self.z, dtype=np.int8)
        if self.z.ndim != 2:
            raise ValueError("z must be a K x N matrix")
        if np.any((self.z != 0) & (self.z != 1)):
            raise ValueError("z must be binary")
        self.counts = self.z.sum(axis=1, dtype=np.int64)

    @property
    def K(self) -> int:
        return self.z.shape[0]

    @property
    def N(self) -> int:
        return self.z.shape[1]

    def set(self, k: int, n: int, value: int) -> None:
        old = self.z[k, n]
        if old != value:
            self.z[k, n] = value
            self.counts[k] += int(value) - int(old)

    def append(self, rows: np.ndarray) -> None:
        rows = np.atleast_2d(np.asarray(rows, dtype=np.int8))
        self.z = np.vstack([self.z, rows])
        self.counts = np.concatenate([self.counts, rows.sum(axis=1, dtype=np.int64)])

    def keep(self, idx) -> None:
        self.z = self.z[idx]
        self.counts = self.counts[idx]

    def consistent(self) -> bool:
        return np.array_equal(self.counts, self.z.sum(axis=1, dtype=np.int64))


@dataclass
class ProjectionBasis:
    w: np.ndarray
    orthonormal: bool = False

    @property
    def D(self) -> int:
        return self.w.shape[0]

    @property
    def K(self) -> int:
        return self.w.shape[1]

    def orthonormality_error(self) -> float:
        if self.K == 0:
            return 0.0
        return float(np.max(np.abs(self.w.T @ self.w - np.eye(self.K))))


@dataclass
class LatentCoefficients:
    """Posterior means ``x`` (K x N) and second moments ``psi`` (N x K x K)."""

    x: np.ndarray
    psi: np.ndarray | None = None


@dataclass
class ModelState:
    basis: ProjectionBasis
    assignments: FeatureAssignments
    hyper: Hyperparameters
    latents: LatentCoefficients | None = None
    log_likelihood_trace: list = field(default_factory=list)
    # set when every feature died and one was kept with an empty row
    degenerate: bool = False
    # Metropolis-Hastings bookkeeping: name -> [accepted, proposed]
    mh_stats: dict = field(default_factory=dict)

    @property
    def K(self) -> int:
        return self.basis.K

    def check(self) -> None:
        K = self.basis.K
        if self.assignments.K != K:
            raise ValueError(f"basis has {K} columns but Z has {self.assignments.K} rows")
        if self.latents is not None and self.latents.x.shape[0] != K:
            raise ValueError("latent rows do not match feature count")

    def copy(self) -> "ModelState":
        return copy.deepcopy(self)


def center_observations(raw) -> ObservationSet:
    """Subtract the per-dimension mean (over points) from a D x N matrix."""
    raw = np.asarray(raw, dtype=float)
    if raw.ndim != 2 or raw.shape[0] < 1 or raw.shape[1] < 1:
        raise ValueError(f"expected a non-empty D x N matrix, got shape {raw.shape}")
    if not np.all(np.isfinite(raw)):
        bad = np.argwhere(~np.isfinite(raw))[0]
        raise ValueError(f"non-finite entry at row {bad[0]}, column {bad[1]}")
    mean = raw.mean(axis=1)
    return ObservationSet(data=raw - mean[:, None], column_mean=mean)


def _as_matrix(W) -> np.ndarray:
    return W.w if isinstance(W, ProjectionBasis) else np.asarray(W, dtype=float)


def _check_scales(sigma_x: float | None, sigma_y: float) -> None:
    if sigma_x is not None and not sigma_x > 0:
        raise DegenerateScaleError(f"sigma_x must be positive, got {sigma_x}")
    if not (sigma_y > 0 and sigma_y**2 > np.finfo(float).tiny):
        raise DegenerateScaleError(
            f"noise covariance is singular: sigma_y = {sigma_y} is degenerate"
        )


def point_log_likelihood(y, W, x, z, sigma_y: float) -> float:
    """log N(y; W (x * z), sigma_y^2 I)."""
    Wm = _as_matrix(W)
    y = np.asarray(y, dtype=float)
    x = np.asarray(x, dtype=float)
    z = np.asarray(z)
    if Wm.shape != (y.shape[0], x.shape[0]) or z.shape != x.shape:
        raise ValueError(
            f"dimension mismatch: y {y.shape}, W {Wm.shape}, x {x.shape}, z {z.shape}"
        )
    _check_scales(None, sigma_y)
    r = y - Wm @ (x * z)
    D = y.shape[0]
    return float(-0.5 * D * (LOG_2PI + np.log(sigma_y**2)) - r @ r / (2 * sigma_y**2))


def marginal_log_likelihood_point(
    y, W, z, sigma_x: float, sigma_y: float, method: str = "auto"
) -> float:
    """log N(y; 0, C) with C = sigma_x^2 (W A)(W A)^T + sigma_y^2 I, A = diag(z).

    ``method`` is "closed" (requires orthonormal columns), "dense", or "auto",
    which picks the closed form when ``W`` is a ProjectionBasis flagged
    orthonormal.
    """
    Wm = _as_matrix(W)
    y = np.asarray(y, dtype=float)
    z = np.asarray(z).astype(bool)
    if Wm.shape[0] != y.shape[0] or Wm.shape[1] != z.shape[0]:
        raise ValueError(f"dimension mismatch: y {y.shape}, W {Wm.shape}, z {z.shape}")
    _check_scales(sigma_x, sigma_y)
    if method == "auto":
        method = "closed" if isinstance(W, ProjectionBasis) and W.orthonormal else "dense"
    D = y.shape[0]
    sx2, sy2 = sigma_x**2, sigma_y**2
    Wa = Wm[:, z]
    if method == "closed":
        k_act = Wa.shape[1]
        proj = Wa.T @ y
        logdet = (D - k_act) * np.log(sy2) + k_act * np.log(sx2 + sy2)
        quad = (y @ y - sx2 / (sx2 + sy2) * (proj @ proj)) / sy2
    elif method == "dense":
        C = sx2 * (Wa @ Wa.T) + sy2 * np.eye(D)
        try:
            cf = cho_factor(C, lower=True)
        except np.linalg.LinAlgError:
            # retry once with a tiny diagonal jitter before giving up
            C[np.diag_indices(D)] += JITTER
            try:
                cf = cho_factor(C, lower=True)
            except np.linalg.LinAlgError as exc:
                raise DegenerateScaleError(
                    f"marginal covariance is singular (sigma_y = {sigma_y})"
                ) from exc
        logdet = 2.0 * np.sum(np.log(np.diag(cf[0])))
        quad = y @ cho_solve(cf, y)
    else:
        raise ValueError(f"unknown method {method!r}")
    return float(-0.5 * (D * LOG_2PI + logdet + quad))


def reconstruct(W, X, Z) -> np.ndarray:
    """Noiseless reconstruction: column n is W (x_n * z_n)."""
    Wm = _as_matrix(W)
    Xm = X.x if isinstance(X, LatentCoefficients) else np.asarray(X, dtype=float)
    Zm = Z.z if isinstance(Z, FeatureAssignments) else np.asarray(Z)
    if Xm.shape != Zm.shape or Wm.shape[1] != Xm.shape[0]:
        raise ValueError(f"dimension mismatch: W {Wm.shape}, X {Xm.shape}, Z {Zm.shape}")
    return Wm @ (Xm * Zm)


def mean_absolute_error(Y, Yhat) -> float:
    Y = np.asarray(Y, dtype=float)
    Yhat = np.asarray(Yhat, dtype=float)
    if Y.shape != Yhat.shape:
        raise ValueError(f"shape mismatch: {Y.shape} vs {Yhat.shape}")
    return float(np.mean(np.abs(Y - Yhat)))


def posterior_latents(Y, W, Z, sigma_x: float, sigma_y: float):
    """Gaussian posterior of the latents for every point.

    Returns ``(x, psi)`` where ``x[:, n]`` is the posterior mean and
    ``psi[n]`` the second moment (posterior covariance + x x^T). Inactive
    coordinates get mean 0 and variance sigma_x^2.
    """
    Ym = Y.data if isinstance(Y, ObservationSet) else np.asarray(Y, dtype=float)
    Wm = _as_matrix(W)
    Zm = (Z.z if isinstance(Z, FeatureAssignments) else np.asarray(Z)).astype(float)
    K, N = Zm.shape
    if K == 0:
        return np.zeros((0, N)), np.zeros((N, 0, 0))
    sx2, sy2 = sigma_x**2, sigma_y**2
    G = Wm.T @ Wm
    masks = Zm.T  # N x K
    prec = (masks[:, :, None] * masks[:, None, :]) * G[None] / sy2
    prec[:, np.arange(K), np.arange(K)] += 1.0 / sx2
    rhs = masks * (Ym.T @ Wm) / sy2
    cov = np.linalg.inv(prec)
    cov = 0.5 * (cov + np.swapaxes(cov, 1, 2))
    x = np.einsum("nij,nj->ni", cov, rhs)
    psi = cov + x[:, :, None] * x[:, None, :]
    return x.T.copy(), psi


def dataset_log_marginal_arrays(Ym, Wm, Zm, sigma_x, sigma_y, orthonormal=False) -> float:
    """Sum over points of the collapsed marginal log likelihood."""
    _check_scales(sigma_x, sigma_y)
    D, N = Ym.shape
    sx2, sy2 = sigma_x**2, sigma_y**2
    yy = np.einsum("dn,dn->n", Ym, Ym)
    Zb = np.asarray(Zm).astype(bool)
    if Wm.shape[1] == 0:
        return float(-0.5 * (N * D * (LOG_2PI + np.log(sy2)) + yy.sum() / sy2))
    P = Wm.T @ Ym
    if orthonormal:
        k_act = Zb.sum(axis=0)
        logdet = (D - k_act) * np.log(sy2) + k_act * np.log(sx2 + sy2)
        quad = (yy - sx2 / (sx2 + sy2) * np.sum(Zb * P**2, axis=0)) / sy2
        return float(-0.5 * np.sum(D * LOG_2PI + logdet + quad))
    G = Wm.T @ Wm
    total = 0.0
    patterns, inverse = np.unique(Zb.T, axis=0, return_inverse=True)
    inverse = np.asarray(inverse).ravel()
    for p, mask in enumerate(patterns):
        cols = np.flatnonzero(inverse == p)
        idx = np.flatnonzero(mask)
        if idx.size == 0:
            logdet = D * np.log(sy2)
            quad = yy[cols] / sy2
        else:
            M = G[np.ix_(idx, idx)] + (sy2 / sx2) * np.eye(idx.size)
            cf = cho_factor(M, lower=True)
            B = P[np.ix_(idx, cols)]
            quad = (yy[cols] - np.sum(B * cho_solve(cf, B), axis=0)) / sy2
            logdet = (
                D * np.log(sy2)
                + 2 * np.sum(np.log(np.diag(cf[0])))
                + idx.size * np.log(sx2 / sy2)
            )
        total += float(np.sum(D * LOG_2PI + logdet + quad))
    return -0.5 * total


def dataset_log_marginal(state: ModelState, Y: ObservationSet) -> float:
    state.check()
    return dataset_log_marginal_arrays(
        Y.data,
        state.basis.w,
        state.assignments.z,
        state.hyper.sigma_x,
        state.hyper.sigma_y,
        orthonormal=state.basis.orthonormal,
    )


def state_reconstruction(state: ModelState, Y: ObservationSet) -> np.ndarray:
    """Posterior-mean reconstruction of the centered data under ``state``."""
    x, _ = posterior_latents(
        Y, state.basis, state.assignments, state.hyper.sigma_x, state.hyper.sigma_y
    )
    return reconstruct(state.basis, x, state.assignments)
