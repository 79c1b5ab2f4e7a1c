"""Collapsed Gibbs and hybrid Gibbs/EM inference for adaptive PPCA."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import LinAlgError, solve

from . import _kernels
from .directional import (
    collapsed_column_parameter,
    orthonormal_complement,
    orthonormality_loss,
    sample_bingham,
)
from .ibp import BIRTH_RATES, Z_LIKELIHOODS, propose_and_accept_births, prune_dead_features
from .model import (
    FeatureAssignments,
    Hyperparameters,
    LatentCoefficients,
    ModelState,
    ObservationSet,
    ProjectionBasis,
    dataset_log_marginal,
    mean_absolute_error,
    posterior_latents,
    reconstruct,
)

log = logging.getLogger(__name__)

SAMPLERS = ("collapsed", "hybrid")


@dataclass
class RunConfig:
    max_iter: int = 100
    burn_in: int = 0
    seed: int = 0
    sampler: str = "hybrid"
    birth_rate: str = "alpha_over_N"
    resample_hyper: bool = False
    track_every: int = 1
    # use the posterior second moments in the W update (exact EM); the
    # means-only update is kept for comparison but diverges on real runs
    em_exact: bool = True
    # likelihood behind the hybrid z-step: "conditional" (given current x)
    # or "marginal" (x integrated out)
    hybrid_z_likelihood: str = "conditional"
    random_scan: bool = False
    update_z: bool = True
    births: bool = True
    mh_step: float = 0.1

    def __post_init__(self):
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if not 0 <= self.burn_in < self.max_iter:
            raise ValueError("burn_in must satisfy 0 <= burn_in < max_iter")
        if self.track_every < 1:
            raise ValueError("track_every must be at least 1")
        if self.sampler not in SAMPLERS:
            raise ValueError(f"sampler must be one of {SAMPLERS}")
        if self.birth_rate not in BIRTH_RATES:
            raise ValueError(f"birth_rate must be one of {BIRTH_RATES}")
        if self.hybrid_z_likelihood not in Z_LIKELIHOODS:
            raise ValueError(f"hybrid_z_likelihood must be one of {Z_LIKELIHOODS}")
        if self.mh_step < 0:
            raise ValueError("mh_step must be non-negative")


@dataclass
class TraceRow:
    iteration: int
    log_likelihood: float
    k_plus: int
    sigma_x: float
    sigma_y: float
    mae: float


@dataclass
class FitResult:
    final_state: ModelState
    map_state: ModelState
    map_log_likelihood: float
    trace: list = field(default_factory=list)
    metrics: dict = field(default_factory=dict)


def _point_order(N, cfg, rng):
    return rng.permutation(N) if cfg.random_scan else range(N)


def _count_mh(state, name, accepted):
    stats = state.mh_stats.setdefault(name, [0, 0])
    stats[0] += int(accepted)
    stats[1] += 1


def collapsed_sweep(
    state: ModelState,
    Y: ObservationSet,
    rng: np.random.Generator,
    cfg: RunConfig | None = None,
    scatter: np.ndarray | None = None,
) -> ModelState:
    """One iteration of the collapsed sampler with an orthonormal basis."""
    cfg = cfg or RunConfig(sampler="collapsed")
    if not state.basis.orthonormal:
        raise ValueError("collapsed sweep requires an orthonormal basis")
    Ym = Y.data
    D, N = Ym.shape
    S = Ym @ Ym.T if scatter is None else scatter
    h = state.hyper

    if cfg.update_z:
        sx2, sy2 = h.sigma_x**2, h.sigma_y**2
        half_coef = 0.5 * sx2 / (sy2 * (sx2 + sy2))
        log_penalty = 0.5 * np.log1p(sx2 / sy2)
        P = state.basis.w.T @ Ym
        for n in _point_order(N, cfg, rng):
            Z = state.assignments
            u = rng.random(Z.K)
            _kernels.collapsed_point_update(
                Z.z[:, n], Z.counts, P[:, n], u, N, half_coef, log_penalty
            )
            if cfg.births:
                k_before = state.K
                state, accepted = propose_and_accept_births(
                    n, state, Y, rng, cfg.birth_rate, "marginal", S
                )
                if accepted is not None:
                    _count_mh(state, "birth", accepted)
                if state.K > k_before:
                    P = np.vstack([P, state.basis.w[:, k_before:].T @ Ym])
        prune_dead_features(state)

    # resample columns in order, each orthogonal to the ones before it
    Z = state.assignments
    K = state.K
    W = np.empty((D, K))
    W[:, 0] = sample_bingham(collapsed_column_parameter(0, Y, Z, h, scatter=S), rng)
    for j in range(1, K):
        B = orthonormal_complement(W[:, :j])
        v = sample_bingham(collapsed_column_parameter(j, Y, Z, h, B, S), rng)
        W[:, j] = B @ v
    state.basis.w = W

    if cfg.resample_hyper:
        resample_hyperparameters(state, Y, rng, step=cfg.mh_step)
    return state


def e_step(state: ModelState, Y: ObservationSet) -> LatentCoefficients:
    x, psi = posterior_latents(
        Y, state.basis, state.assignments, state.hyper.sigma_x, state.hyper.sigma_y
    )
    return LatentCoefficients(x, psi)


def m_step(state: ModelState, Y: ObservationSet, em_exact: bool = False) -> ModelState:
    """Maximisation updates of W, sigma_y^2 and sigma_x^2 given the E-step."""
    Ym = Y.data
    D, N = Ym.shape
    z = state.assignments.z.astype(float)
    x, psi = state.latents.x, state.latents.psi
    K = z.shape[0]
    xa = x * z
    syx = Ym @ xa.T
    if em_exact:
        sxx = np.einsum("kn,nkl,ln->kl", z, psi, z)
    else:
        sxx = xa @ xa.T
    sxx = 0.5 * (sxx + sxx.T) + 1e-10 * np.eye(K)
    try:
        W = solve(sxx, syx.T, assume_a="pos").T
    except (LinAlgError, ValueError):
        log.warning("W update skipped: sufficient-statistic matrix is singular")
        W = state.basis.w
    G = W.T @ W
    cross = np.sum(xa * (W.T @ Ym))
    trace_term = np.einsum("kn,kl,ln,nlk->", z, G, z, psi)
    sy2 = (np.sum(Ym * Ym) - 2.0 * cross + trace_term) / (N * D)
    sx2 = np.einsum("nkk->", psi) / (N * K)
    if not (sy2 > 0 and sx2 > 0):
        raise FloatingPointError(f"non-positive variance after M-step: {sy2=}, {sx2=}")
    state.basis.w = W
    state.hyper.sigma_y = float(np.sqrt(sy2))
    state.hyper.sigma_x = float(np.sqrt(sx2))
    return state


def hybrid_sweep(
    state: ModelState,
    Y: ObservationSet,
    rng: np.random.Generator,
    cfg: RunConfig | None = None,
) -> ModelState:
    """One iteration of the hybrid sampler: sampled Z, then E and M updates."""
    cfg = cfg or RunConfig(sampler="hybrid")
    Ym = Y.data
    D, N = Ym.shape
    h = state.hyper
    if state.latents is None:
        state.latents = e_step(state, Y)

    if cfg.update_z:
        sx2, sy2 = h.sigma_x**2, h.sigma_y**2
        marginal = cfg.hybrid_z_likelihood == "marginal"
        yy = np.einsum("dn,dn->n", Ym, Ym)
        W = np.ascontiguousarray(state.basis.w)
        G, P = W.T @ W, W.T @ Ym
        for n in _point_order(N, cfg, rng):
            Z = state.assignments
            u = rng.random(Z.K)
            if marginal:
                _kernels.hybrid_point_update_marginal(
                    Z.z[:, n], Z.counts, G, P[:, n], yy[n], u, N, sx2, sy2, D
                )
            else:
                x = state.latents.x[:, n]
                r = Ym[:, n] - W @ (x * Z.z[:, n])
                _kernels.hybrid_point_update_conditional(
                    Z.z[:, n], Z.counts, W, x, r, u, N, sy2
                )
            if cfg.births:
                k_before = state.K
                state, accepted = propose_and_accept_births(
                    n, state, Y, rng, cfg.birth_rate, cfg.hybrid_z_likelihood
                )
                if accepted is not None:
                    _count_mh(state, "birth", accepted)
                if state.K > k_before:
                    W = np.ascontiguousarray(state.basis.w)
                    G, P = W.T @ W, W.T @ Ym
        prune_dead_features(state)

    state.latents = e_step(state, Y)
    m_step(state, Y, cfg.em_exact)
    if cfg.resample_hyper:
        resample_hyperparameters(state, Y, rng, step=cfg.mh_step, sigmas=False)
    return state


def _log_gamma_shape2_rate2(s):
    return np.log(4.0) + np.log(s) - 2.0 * s


def resample_hyperparameters(
    state: ModelState,
    Y: ObservationSet,
    rng: np.random.Generator,
    step: float = 0.1,
    sigmas: bool = True,
    alpha: bool = True,
) -> ModelState:
    """Random-walk MH on log variances and log alpha.

    The variances carry Gamma(2, 2) priors and are scored with the collapsed
    marginal likelihood; alpha has a Gamma(1, 1) prior and is scored with the
    IBP feature-count term alpha^K exp(-alpha H_N).
    """
    h = state.hyper
    if sigmas:
        current = dataset_log_marginal(state, Y)
        for name in ("sigma_x", "sigma_y"):
            s_old = getattr(h, name) ** 2
            s_new = s_old * np.exp(step * rng.standard_normal())
            setattr(h, name, float(np.sqrt(s_new)))
            proposed = dataset_log_marginal(state, Y)
            log_a = (
                proposed
                - current
                + _log_gamma_shape2_rate2(s_new)
                - _log_gamma_shape2_rate2(s_old)
                + np.log(s_new)
                - np.log(s_old)
            )
            accepted = np.log(rng.random()) < log_a
            if accepted:
                current = proposed
            else:
                setattr(h, name, float(np.sqrt(s_old)))
            _count_mh(state, name, accepted)
    if alpha:
        harmonic = np.sum(1.0 / np.arange(1, Y.N + 1))
        a_old = h.alpha
        a_new = a_old * np.exp(step * rng.standard_normal())
        log_target = lambda a: state.K * np.log(a) - a * harmonic - a + np.log(a)
        accepted = np.log(rng.random()) < log_target(a_new) - log_target(a_old)
        if accepted:
            h.alpha = float(a_new)
        _count_mh(state, "alpha", accepted)
    return state


def initial_state(
    Y: ObservationSet, hyper: Hyperparameters, sampler: str, rng: np.random.Generator
) -> ModelState:
    D, N = Y.D, Y.N
    hyper = Hyperparameters(hyper.alpha, hyper.sigma_x, hyper.sigma_y, hyper.sigma_v)
    if sampler == "collapsed":
        w1 = sample_bingham(hyper.sigma_v * (Y.data @ Y.data.T), rng)
    else:
        w1 = rng.standard_normal(D)
        w1 /= np.linalg.norm(w1)
    state = ModelState(
        basis=ProjectionBasis(w1[:, None].copy(), orthonormal=sampler == "collapsed"),
        assignments=FeatureAssignments(np.ones((1, N), dtype=np.int8)),
        hyper=hyper,
    )
    if sampler == "hybrid":
        state.latents = e_step(state, Y)
    return state


def state_metrics(state: ModelState, Y: ObservationSet) -> dict:
    x, _ = posterior_latents(
        Y, state.basis, state.assignments, state.hyper.sigma_x, state.hyper.sigma_y
    )
    Yhat = reconstruct(state.basis, x, state.assignments)
    return {
        "k_plus": state.K,
        "mae": mean_absolute_error(Y.data, Yhat),
        "orthonormality_loss": orthonormality_loss(state.basis.w),
        "log_likelihood": dataset_log_marginal(state, Y),
        "sigma_x": state.hyper.sigma_x,
        "sigma_y": state.hyper.sigma_y,
        "alpha": state.hyper.alpha,
    }


def fit(
    Y: ObservationSet,
    hyper: Hyperparameters,
    cfg: RunConfig,
    callback=None,
) -> FitResult:
    """Run ``cfg.max_iter`` sweeps from a single-feature start.

    Iterations after burn-in are traced every ``track_every`` sweeps, and the
    sweep with the highest collapsed marginal likelihood is kept as the MAP
    state. ``metrics`` describe the final state; the MAP state's metrics are
    included with a ``map_`` prefix.
    """
    rng = np.random.Generator(np.random.Philox(cfg.seed))
    state = initial_state(Y, hyper, cfg.sampler, rng)
    scatter = Y.data @ Y.data.T
    best, best_ll = None, -np.inf
    trace = []
    for it in range(1, cfg.max_iter + 1):
        if cfg.sampler == "collapsed":
            collapsed_sweep(state, Y, rng, cfg, scatter)
        else:
            hybrid_sweep(state, Y, rng, cfg)
        if it <= cfg.burn_in:
            continue
        ll = dataset_log_marginal(state, Y)
        state.log_likelihood_trace.append(ll)
        if ll > best_ll:
            best, best_ll = state.copy(), ll
        if (it - cfg.burn_in) % cfg.track_every == 0:
            m = state_metrics(state, Y)
            trace.append(
                TraceRow(it, ll, state.K, state.hyper.sigma_x, state.hyper.sigma_y, m["mae"])
            )
            if callback is not None:
                callback(trace[-1])
    metrics = state_metrics(state, Y)
    metrics.update({f"map_{k}": v for k, v in state_metrics(best, Y).items()})
    return FitResult(
        final_state=state,
        map_state=best,
        map_log_likelihood=best_ll,
        trace=trace,
        metrics=metrics,
    )
