"""Indian buffet process machinery: prior draws, indicator updates, births
with Metropolis-Hastings acceptance, and dead-feature pruning."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .directional import orthonormal_complement, sample_bingham
from .model import (
    FeatureAssignments,
    LatentCoefficients,
    ModelState,
    ObservationSet,
    marginal_log_likelihood_point,
    point_log_likelihood,
)

log = logging.getLogger(__name__)

BIRTH_RATES = ("alpha_over_N", "alpha_over_n")
Z_LIKELIHOODS = ("marginal", "conditional")


@dataclass
class BirthProposal:
    kappa: int
    new_columns: np.ndarray
    target_point: int

    def __post_init__(self):
        if self.kappa < 0 or self.new_columns.shape[1] != self.kappa:
            raise ValueError("new_columns must have exactly kappa columns")


def sample_ibp_prior(N: int, alpha: float, rng: np.random.Generator) -> FeatureAssignments:
    """Draw Z (K x N) from the restaurant construction of the IBP."""
    if N < 1:
        raise ValueError("N must be at least 1")
    if alpha < 0:
        raise ValueError("alpha must be non-negative")
    columns = []  # one list of customers per dish
    counts = []
    for i in range(1, N + 1):
        if counts:
            take = rng.random(len(counts)) < np.asarray(counts) / i
            for k in np.flatnonzero(take):
                columns[k].append(i - 1)
                counts[k] += 1
        for _ in range(rng.poisson(alpha / i)):
            columns.append([i - 1])
            counts.append(1)
    z = np.zeros((len(columns), N), dtype=np.int8)
    for k, owners in enumerate(columns):
        z[k, owners] = 1
    return FeatureAssignments(z)


def z_log_odds(
    n: int, k: int, state: ModelState, Y: ObservationSet, likelihood: str = "marginal"
) -> float:
    """Log posterior odds of z_kn = 1 versus 0 given everything else.

    Prior weights are m_{k,-n}/N and (N - m_{k,-n})/N. With ``likelihood``
    "marginal" the latents are integrated out; "conditional" evaluates the
    point likelihood at the current latents.
    """
    Z = state.assignments
    N = Z.N
    m = int(Z.counts[k] - Z.z[k, n])
    if m == 0:
        return -np.inf
    y = Y.data[:, n]
    z1 = Z.z[:, n].copy()
    z0 = z1.copy()
    z1[k], z0[k] = 1, 0
    h = state.hyper
    if likelihood == "marginal":
        l1 = marginal_log_likelihood_point(y, state.basis, z1, h.sigma_x, h.sigma_y)
        l0 = marginal_log_likelihood_point(y, state.basis, z0, h.sigma_x, h.sigma_y)
    elif likelihood == "conditional":
        x = state.latents.x[:, n]
        l1 = point_log_likelihood(y, state.basis, x, z1, h.sigma_y)
        l0 = point_log_likelihood(y, state.basis, x, z0, h.sigma_y)
    else:
        raise ValueError(f"unknown likelihood {likelihood!r}")
    return np.log(m) - np.log(N - m) + l1 - l0


def gibbs_update_z_entry(
    n: int,
    k: int,
    state: ModelState,
    Y: ObservationSet,
    rng: np.random.Generator,
    likelihood: str = "marginal",
) -> ModelState:
    if not 0 <= k < state.K:
        raise IndexError(f"feature {k} does not exist (K = {state.K})")
    lo = z_log_odds(n, k, state, Y, likelihood)
    u = rng.random()
    new = 1 if u * (1.0 + np.exp(-lo)) < 1.0 else 0
    state.assignments.set(k, n, new)
    return state


def birth_rate(alpha: float, N: int, n: int, convention: str = "alpha_over_N") -> float:
    """Poisson rate of new features at (0-based) point n."""
    if convention == "alpha_over_N":
        return alpha / N
    if convention == "alpha_over_n":
        return alpha / (n + 1)
    raise ValueError(f"unknown birth rate convention {convention!r}")


def draw_birth_proposal(
    n: int,
    state: ModelState,
    Y: ObservationSet,
    rng: np.random.Generator,
    kappa: int,
    scatter: np.ndarray | None = None,
) -> BirthProposal:
    """New columns from the prior: Bingham on the complement when the basis is
    orthonormal, uniform on the sphere otherwise."""
    D = Y.D
    if not state.basis.orthonormal:
        v = rng.standard_normal((D, kappa))
        return BirthProposal(kappa, v / np.linalg.norm(v, axis=0), n)
    S = Y.data @ Y.data.T if scatter is None else scatter
    W = state.basis.w
    new = []
    for _ in range(kappa):
        B = orthonormal_complement(W)
        v = sample_bingham(state.hyper.sigma_v * (B.T @ S @ B), rng)
        w = B @ v
        new.append(w)
        W = np.column_stack([W, w])
    cols = np.column_stack(new) if new else np.zeros((D, 0))
    return BirthProposal(kappa, cols, n)


def birth_log_acceptance(
    proposal: BirthProposal,
    state: ModelState,
    Y: ObservationSet,
    likelihood: str = "marginal",
) -> float:
    """log of L_prop / L_curr for the target point alone."""
    n = proposal.target_point
    y = Y.data[:, n]
    h = state.hyper
    ones = np.ones(proposal.kappa, dtype=np.int8)
    if likelihood == "marginal":
        z = state.assignments.z[:, n]
        basis = state.basis
        prop = type(basis)(np.column_stack([basis.w, proposal.new_columns]), basis.orthonormal)
        l_prop = marginal_log_likelihood_point(
            y, prop, np.concatenate([z, ones]), h.sigma_x, h.sigma_y
        )
        l_curr = marginal_log_likelihood_point(y, basis, z, h.sigma_x, h.sigma_y)
        return l_prop - l_curr
    # old features at their current latents, new ones integrated out
    r = y - state.basis.w @ (state.latents.x[:, n] * state.assignments.z[:, n])
    Wn = proposal.new_columns
    return marginal_log_likelihood_point(
        r, Wn, ones, h.sigma_x, h.sigma_y, method="dense"
    ) - marginal_log_likelihood_point(r, Wn, 0 * ones, h.sigma_x, h.sigma_y, method="dense")


def accept_birth(proposal: BirthProposal, state: ModelState, Y: ObservationSet) -> ModelState:
    kappa, n = proposal.kappa, proposal.target_point
    N = state.assignments.N
    rows = np.zeros((kappa, N), dtype=np.int8)
    rows[:, n] = 1
    if state.latents is not None:
        h = state.hyper
        Wn = proposal.new_columns
        r = Y.data[:, n] - state.basis.w @ (state.latents.x[:, n] * state.assignments.z[:, n])
        prec = np.eye(kappa) / h.sigma_x**2 + Wn.T @ Wn / h.sigma_y**2
        xs = np.zeros((kappa, N))
        xs[:, n] = np.linalg.solve(prec, Wn.T @ r / h.sigma_y**2)
        state.latents = LatentCoefficients(np.vstack([state.latents.x, xs]), None)
    state.basis.w = np.column_stack([state.basis.w, proposal.new_columns])
    state.assignments.append(rows)
    return state


def propose_and_accept_births(
    n: int,
    state: ModelState,
    Y: ObservationSet,
    rng: np.random.Generator,
    rate_convention: str = "alpha_over_N",
    likelihood: str = "marginal",
    scatter: np.ndarray | None = None,
) -> tuple[ModelState, bool | None]:
    """Propose Poisson-many new features for point n and accept or reject them
    as one block. Returns the state and whether a proposal was accepted
    (None when nothing was proposed)."""
    kappa = int(rng.poisson(birth_rate(state.hyper.alpha, Y.N, n, rate_convention)))
    if kappa == 0:
        return state, None
    if state.basis.orthonormal:
        free = Y.D - state.K
        if free <= 0:
            log.debug("birth skipped at point %d: no free directions", n)
            return state, None
        kappa = min(kappa, free)
    proposal = draw_birth_proposal(n, state, Y, rng, kappa, scatter)
    log_a = birth_log_acceptance(proposal, state, Y, likelihood)
    if np.log(rng.random()) < log_a:
        return accept_birth(proposal, state, Y), True
    return state, False


def prune_dead_features(state: ModelState) -> ModelState:
    """Remove features no point uses; always keep at least one."""
    counts = state.assignments.counts
    keep = np.flatnonzero(counts > 0)
    if keep.size == counts.size:
        state.degenerate = False
        return state
    if keep.size == 0:
        keep = np.array([counts.size - 1])
        state.degenerate = True
    else:
        state.degenerate = False
    state.basis.w = state.basis.w[:, keep]
    state.assignments.keep(keep)
    if state.latents is not None:
        psi = state.latents.psi
        if psi is not None:
            psi = psi[:, keep][:, :, keep]
        state.latents = LatentCoefficients(state.latents.x[keep], psi)
    return state
