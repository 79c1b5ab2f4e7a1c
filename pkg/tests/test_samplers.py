import numpy as np
import pytest

from appca.data_io import SyntheticSpec, generate_synthetic
from appca.model import (
    FeatureAssignments,
    Hyperparameters,
    ModelState,
    ProjectionBasis,
    center_observations,
    dataset_log_marginal,
)
from appca.samplers import (
    RunConfig,
    collapsed_sweep,
    e_step,
    fit,
    hybrid_sweep,
    initial_state,
    m_step,
    resample_hyperparameters,
    state_metrics,
)


def _synthetic(D=8, K=3, N=200, seed=0):
    data = generate_synthetic(SyntheticSpec(D=D, K_plus=K, N=N, seed=seed))
    return center_observations(data.Y), data


@pytest.mark.parametrize(
    "kwargs",
    [
        {"max_iter": 0},
        {"burn_in": 5, "max_iter": 5},
        {"track_every": 0},
        {"sampler": "gibbs"},
        {"birth_rate": "fast"},
        {"hybrid_z_likelihood": "exact"},
        {"mh_step": -1.0},
    ],
)
def test_run_config_validation(kwargs):
    with pytest.raises(ValueError):
        RunConfig(**kwargs)


def test_collapsed_sweeps_keep_exact_orthonormality():
    Y, _ = _synthetic(D=6, K=2, N=120)
    rng = np.random.default_rng(0)
    cfg = RunConfig(sampler="collapsed", resample_hyper=True)
    state = initial_state(Y, Hyperparameters(2.0, 1.0, 1.0), "collapsed", rng)
    for _ in range(25):
        collapsed_sweep(state, Y, rng, cfg)
        assert state.basis.orthonormality_error() < 1e-8
        assert state.assignments.consistent()
        state.check()


def test_collapsed_requires_orthonormal_basis():
    Y, _ = _synthetic(D=4, K=1, N=10)
    state = initial_state(Y, Hyperparameters(), "hybrid", np.random.default_rng(0))
    with pytest.raises(ValueError, match="orthonormal"):
        collapsed_sweep(state, Y, np.random.default_rng(0))


def test_collapsed_chain_recovers_noise_scales():
    Y, _ = _synthetic(D=8, K=3, N=300, seed=3)
    res = fit(Y, Hyperparameters(1.0, 1.0, 1.0),
              RunConfig(max_iter=40, sampler="collapsed", resample_hyper=True, seed=1))
    h = res.final_state.hyper
    assert abs(h.sigma_y - 0.5) < 0.1
    assert abs(h.sigma_x - 1.5) < 0.3


def test_em_step_matches_tipping_bishop_update():
    # Z all ones and sigma_x = 1 reduce the exact M-step to probabilistic PCA EM
    rng = np.random.default_rng(1)
    D, K, N = 6, 2, 80
    Y = center_observations(rng.standard_normal((D, N)) * np.linspace(2, 0.5, D)[:, None])
    W0 = rng.standard_normal((D, K))
    sigma2 = 0.7
    state = ModelState(
        ProjectionBasis(W0.copy()),
        FeatureAssignments(np.ones((K, N), dtype=np.int8)),
        Hyperparameters(1.0, 1.0, np.sqrt(sigma2)),
    )
    state.latents = e_step(state, Y)
    m_step(state, Y, em_exact=True)

    S = Y.data @ Y.data.T / N
    M = W0.T @ W0 + sigma2 * np.eye(K)
    SW = S @ W0
    W_tb = SW @ np.linalg.inv(sigma2 * np.eye(K) + np.linalg.solve(M, W0.T @ SW))
    s2_tb = np.trace(S - SW @ np.linalg.solve(M, W_tb.T)) / D
    assert np.allclose(state.basis.w, W_tb, atol=1e-8)
    assert state.hyper.sigma_y**2 == pytest.approx(s2_tb, abs=1e-8)


@pytest.mark.parametrize("seed", range(3))
def test_em_monotone_with_frozen_assignments(seed):
    Y, data = _synthetic(D=7, K=3, N=150, seed=seed)
    rng = np.random.default_rng(seed)
    Z = FeatureAssignments(data.Z.copy())
    state = ModelState(
        ProjectionBasis(rng.standard_normal((7, 3))), Z, Hyperparameters(1.0, 1.0, 1.0)
    )
    cfg = RunConfig(update_z=False, births=False, em_exact=True)
    prev = dataset_log_marginal(state, Y)
    for _ in range(20):
        hybrid_sweep(state, Y, rng, cfg)
        cur = dataset_log_marginal(state, Y)
        assert cur >= prev - 1e-9
        prev = cur


@pytest.mark.parametrize("zl", ["marginal", "conditional"])
def test_hybrid_fit_reports_finite_metrics(zl):
    Y, _ = _synthetic(D=8, K=3, N=150)
    res = fit(Y, Hyperparameters(1.0, 1.0, 1.0),
              RunConfig(max_iter=8, hybrid_z_likelihood=zl, seed=2))
    for key in ("k_plus", "mae", "orthonormality_loss", "log_likelihood",
                "map_mae", "map_log_likelihood"):
        assert np.isfinite(res.metrics[key])
    assert 0 <= res.metrics["orthonormality_loss"] <= 90
    assert res.map_log_likelihood == max(res.final_state.log_likelihood_trace)
    assert res.metrics["mae"] == state_metrics(res.final_state, Y)["mae"]


def test_fit_is_deterministic_given_seed():
    Y, _ = _synthetic(D=6, K=2, N=100)
    cfg = RunConfig(max_iter=6, sampler="collapsed", resample_hyper=True, seed=7)
    a = fit(Y, Hyperparameters(1.0, 1.0, 1.0), cfg)
    b = fit(Y, Hyperparameters(1.0, 1.0, 1.0), cfg)
    assert a.trace == b.trace
    assert np.array_equal(a.final_state.basis.w, b.final_state.basis.w)


def test_trace_respects_burn_in_and_thinning():
    Y, _ = _synthetic(D=5, K=2, N=60)
    seen = []
    res = fit(Y, Hyperparameters(), RunConfig(max_iter=10, burn_in=4, track_every=3,
                                              random_scan=True),
              callback=seen.append)
    assert [r.iteration for r in res.trace] == [7, 10]
    assert seen == res.trace
    assert len(res.final_state.log_likelihood_trace) == 6


def test_alpha_move_targets_gamma_posterior():
    # with K fixed, alpha | K ~ Gamma(K + 1, H_N + 1) under the Gamma(1, 1) prior
    Y, _ = _synthetic(D=4, K=2, N=20)
    state = initial_state(Y, Hyperparameters(1.0, 1.0, 1.0), "collapsed",
                          np.random.default_rng(0))
    state.basis.w = np.linalg.qr(np.random.default_rng(1).standard_normal((4, 3)))[0]
    state.assignments = FeatureAssignments(np.ones((3, 20), dtype=np.int8))
    rng = np.random.default_rng(2)
    draws = []
    for i in range(30000):
        resample_hyperparameters(state, Y, rng, step=0.6, sigmas=False)
        if i >= 1000:
            draws.append(state.hyper.alpha)
    H = np.sum(1.0 / np.arange(1, 21))
    assert np.mean(draws) == pytest.approx(4 / (H + 1), rel=0.05)


def test_scale_moves_target_grid_posterior():
    rng = np.random.default_rng(3)
    D, N = 2, 15
    Y = center_observations(rng.standard_normal((D, N)) * np.array([[1.6], [0.6]]))
    W = np.eye(2)[:, :1]
    state = ModelState(
        ProjectionBasis(W, orthonormal=True),
        FeatureAssignments(np.ones((1, N), dtype=np.int8)),
        Hyperparameters(1.0, 1.0, 1.0),
    )
    # reference posterior mean of sigma_y^2 on a log grid of both variances
    g = np.linspace(np.log(0.02), np.log(12.0), 220)
    lp = np.empty((g.size, g.size))
    for i, a in enumerate(g):
        for j, b in enumerate(g):
            sx2, sy2 = np.exp(a), np.exp(b)
            state.hyper.sigma_x, state.hyper.sigma_y = np.sqrt(sx2), np.sqrt(sy2)
            lp[i, j] = (dataset_log_marginal(state, Y) + np.log(sx2) - 2 * sx2
                        + np.log(sy2) - 2 * sy2 + a + b)
    p = np.exp(lp - lp.max())
    p /= p.sum()
    ref_sy2 = np.sum(p * np.exp(g)[None, :])
    ref_sx2 = np.sum(p * np.exp(g)[:, None])

    state.hyper.sigma_x, state.hyper.sigma_y = 1.0, 1.0
    sx, sy = [], []
    for i in range(30000):
        resample_hyperparameters(state, Y, rng, step=0.7, alpha=False)
        if i >= 1000:
            sx.append(state.hyper.sigma_x**2)
            sy.append(state.hyper.sigma_y**2)
    assert np.mean(sy) == pytest.approx(ref_sy2, rel=0.05)
    assert np.mean(sx) == pytest.approx(ref_sx2, rel=0.1)


def test_initial_state_shapes():
    Y, _ = _synthetic(D=5, K=2, N=30)
    rng = np.random.default_rng(0)
    for kind in ("collapsed", "hybrid"):
        s = initial_state(Y, Hyperparameters(), kind, rng)
        assert s.K == 1 and s.assignments.z.all()
        assert np.linalg.norm(s.basis.w) == pytest.approx(1.0)
        assert (s.latents is not None) == (kind == "hybrid")


def test_single_tracked_iteration_after_burn_in():
    Y, _ = _synthetic(D=5, K=2, N=40)
    res = fit(Y, Hyperparameters(), RunConfig(max_iter=4, burn_in=3))
    assert len(res.trace) == 1 and res.trace[0].iteration == 4


def test_collapsed_feature_count_never_exceeds_dimension():
    Y, _ = _synthetic(D=4, K=3, N=150)
    res = fit(Y, Hyperparameters(50.0, 1.0, 1.0),
              RunConfig(max_iter=15, sampler="collapsed", seed=3))
    assert max(r.k_plus for r in res.trace) <= 4


def test_hybrid_beats_pca_on_planted_benchmark_data():
    from appca.baselines import pca_fit
    from appca.model import mean_absolute_error

    Y, _ = _synthetic(D=15, K=4, N=1000, seed=12)
    res = fit(Y, Hyperparameters(5.0, 1.0, 1.0), RunConfig(max_iter=100, seed=12))
    pca = mean_absolute_error(Y.data, pca_fit(Y, 9).reconstruction)
    assert res.metrics["mae"] < pca
