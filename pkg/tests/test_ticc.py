import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from oracles import brute_force_path, gaussian_logpdf, glasso_reference, glasso_value, random_spd, tie_groups
from timeliner.errors import DataError
from timeliner.metrics import match_clusters, matched_macro_f1
from timeliner.synth import planted_regimes
from timeliner.ticc import (
    ClusterModel,
    TiccConfig,
    TiccModel,
    assign_dp,
    expand_path_to_frames,
    fit,
    log_likelihood,
    path_cost,
    predict,
    solve_toeplitz_glasso,
    stack_windows,
)

# ---------------------------------------------------------------------------
# windows


def test_window_one_is_identity():
    x = np.arange(12.0).reshape(6, 2)
    assert np.array_equal(stack_windows(x, 1), x)


def test_forward_stacking_small():
    x = np.arange(10.0).reshape(5, 2)
    X = stack_windows(x, 3)
    assert X.shape == (3, 6)
    assert np.array_equal(X[0], np.concatenate([x[0], x[1], x[2]]))


@given(st.integers(1, 6), st.integers(1, 4), st.data())
def test_window_rows_slice_source(w, n, data):
    T = data.draw(st.integers(w, 20))
    x = data.draw(hnp.arrays(np.float64, (T, n), elements=st.floats(-10, 10)))
    X = stack_windows(x, w)
    assert X.shape == (T - w + 1, n * w)
    for t in range(T - w + 1):
        assert np.array_equal(X[t], x[t:t + w].ravel())


def test_short_series_rejected():
    with pytest.raises(DataError):
        stack_windows(np.zeros((2, 1)), 3)


# ---------------------------------------------------------------------------
# likelihood


def test_log_likelihood_scalar_standard_normal():
    c = ClusterModel.from_precision(np.eye(1), np.zeros(1))
    assert log_likelihood(np.zeros(1), c) == pytest.approx(-0.5 * math.log(2 * math.pi), abs=1e-12)
    assert log_likelihood(np.zeros(1), c) == pytest.approx(-0.91894, abs=1e-5)


def test_log_likelihood_identity_at_mean():
    mu = np.array([0.3, -1.0, 2.0])
    c = ClusterModel.from_precision(np.eye(3), mu)
    assert log_likelihood(mu, c) == pytest.approx(-1.5 * math.log(2 * math.pi), abs=1e-12)


def test_log_likelihood_matches_dense_density(rng):
    for _ in range(10):
        theta = np.linalg.inv(random_spd(rng, 2))
        mu = rng.normal(size=2)
        x = rng.normal(size=2)
        c = ClusterModel.from_precision(theta, mu)
        assert log_likelihood(x, c) == pytest.approx(gaussian_logpdf(x, mu, theta), rel=1e-10)


def test_log_likelihood_dimension_mismatch():
    c = ClusterModel.from_precision(np.eye(2), np.zeros(2))
    with pytest.raises(DataError):
        log_likelihood(np.zeros(3), c)


# ---------------------------------------------------------------------------
# dynamic programming


def test_beta_zero_is_rowwise_argmin(rng):
    costs = rng.normal(size=(30, 4))
    assert np.array_equal(assign_dp(costs, 0.0).labels, costs.argmin(axis=1))


def test_switch_saving_below_beta_stays_constant():
    # switching to cluster 1 on the last two windows saves 3.0 in total, less than beta=5
    costs = np.array([[0.0, 2.0], [0.0, 2.0], [1.5, 0.0], [1.5, 0.0]])
    p = assign_dp(costs, 5.0)
    assert p.labels.tolist() == [0, 0, 0, 0]
    assert p.objective == pytest.approx(brute_force_path(costs, 5.0))
    assert p.objective == pytest.approx(3.0)


def test_ties_prefer_lower_index():
    assert assign_dp(np.zeros((5, 3)), 1.0).labels.tolist() == [0] * 5
    costs = np.array([[1.0, 0.0], [0.0, 1.0]])
    # both constant paths and the switching path cost 1.0; lower index wins
    assert assign_dp(costs, 1.0).labels.tolist() == [0, 0]


@pytest.mark.parametrize("beta", [0.0, 1.0, 5.0])
def test_dp_matches_brute_force(beta):
    rng = np.random.default_rng(int(beta * 10) + 1)
    for _ in range(40):
        T, K = int(rng.integers(1, 9)), int(rng.integers(1, 4))
        costs = rng.normal(size=(T, K)) * 3
        p = assign_dp(costs, beta)
        assert p.objective == pytest.approx(brute_force_path(costs, beta), abs=1e-9)
        assert p.objective == pytest.approx(path_cost(costs, p.labels, beta), abs=1e-8)


@given(hnp.arrays(np.float64, st.tuples(st.integers(1, 40), st.integers(1, 4)), elements=st.floats(-50, 50)),
       st.lists(st.floats(0, 100), min_size=2, max_size=6))
def test_switch_count_non_increasing_in_beta(costs, betas):
    counts = [assign_dp(costs, b).num_switches for b in sorted(betas)]
    assert all(a >= b for a, b in zip(counts, counts[1:]))


def test_dp_rejects_empty_and_nonfinite():
    with pytest.raises(DataError):
        assign_dp(np.zeros((0, 2)), 1.0)
    with pytest.raises(DataError):
        assign_dp(np.array([[np.nan, 0.0]]), 1.0)


def test_expand_path_examples():
    assert expand_path_to_frames(np.array([0, 0, 1]), 5, 3).tolist() == [0, 0, 1, 1, 1]
    assert expand_path_to_frames(np.array([2, 0, 1]), 3, 1).tolist() == [2, 0, 1]
    assert expand_path_to_frames(np.full(8, 4), 10, 3).tolist() == [4] * 10
    with pytest.raises(DataError):
        expand_path_to_frames(np.array([0, 1]), 5, 3)


# ---------------------------------------------------------------------------
# block-Toeplitz graphical lasso


def test_unpenalized_identity():
    r = solve_toeplitz_glasso(np.eye(3), 10, TiccConfig(window_size=1, lam=0.0))
    assert np.allclose(r.theta, np.eye(3), atol=1e-6)


def test_unpenalized_diagonal_inverse():
    r = solve_toeplitz_glasso(np.diag([2.0, 0.5]), 10, TiccConfig(window_size=1, lam=0.0))
    assert np.allclose(r.theta, np.diag([0.5, 2.0]), atol=1e-6)


def assert_block_toeplitz(theta, n, w, tol=1e-10):
    for g in tie_groups(n, w):
        vals = [theta[i, j] for i, j in g]
        assert max(vals) - min(vals) <= tol


@pytest.mark.parametrize("seed", range(4))
def test_two_channel_two_lag_matches_reference(seed):
    rng = np.random.default_rng(seed)
    S = random_spd(rng, 4, samples=12)
    N = 40
    cfg = TiccConfig(window_size=2, lam=0.1)
    r = solve_toeplitz_glasso(S, N, cfg, n_channels=2)
    ref, _ = glasso_reference(S, N, 2, 2, 0.1)
    assert abs(glasso_value(r.theta, S, N, 0.1) - ref) <= 1e-4 * abs(ref)
    assert_block_toeplitz(r.theta, 2, 2)
    np.linalg.cholesky(r.theta)


def test_non_symmetric_rejected():
    S = np.eye(2)
    S[0, 1] = 0.3
    with pytest.raises(DataError):
        solve_toeplitz_glasso(S, 5, TiccConfig(window_size=1))


def test_penalty_shrinks_off_diagonal(rng):
    S = random_spd(rng, 3, samples=6)
    small = solve_toeplitz_glasso(S, 5, TiccConfig(window_size=1, lam=0.0)).theta
    big = solve_toeplitz_glasso(S, 5, TiccConfig(window_size=1, lam=50.0)).theta
    off = ~np.eye(3, dtype=bool)
    assert np.abs(big[off]).sum() < np.abs(small[off]).sum()
    assert np.allclose(big[off], 0.0, atol=1e-6)


def test_nonconvergence_warns_and_returns_pd(rng):
    S = random_spd(rng, 6, samples=7)
    cfg = TiccConfig(window_size=2, lam=0.05, admm_max_iter=2, adaptive_rho=False)
    with pytest.warns(RuntimeWarning, match="did not converge"):
        r = solve_toeplitz_glasso(S, 7, cfg, n_channels=3)
    assert not r.converged
    np.linalg.cholesky(r.theta)
    assert_block_toeplitz(r.theta, 3, 2)


def test_channel_scale_equivariance(rng):
    # rescaling a channel rescales the optimum when the penalty is zero
    S = random_spd(rng, 4, samples=20)
    D = np.diag([10.0, 0.1, 10.0, 0.1])
    cfg = TiccConfig(window_size=2, lam=0.0, admm_eps_abs=1e-9, admm_eps_rel=1e-9, admm_max_iter=5000)
    a = solve_toeplitz_glasso(S, 30, cfg, n_channels=2).theta
    b = solve_toeplitz_glasso(D @ S @ D, 30, cfg, n_channels=2).theta
    assert np.allclose(D @ b @ D, a, rtol=1e-5, atol=1e-7)


# ---------------------------------------------------------------------------
# fitting


@pytest.fixture(scope="module")
def two_regimes():
    x, labels, precisions = planted_regimes(1500, 3, 3, 2, seg_len=(500, 500), seed=0)
    model, path = fit(x, TiccConfig(n_clusters=2, beta=5.0, seed=0))
    return x, labels, precisions, model, path


def test_k_one_is_single_cluster_mle(rng):
    x = rng.normal(size=(200, 2))
    cfg = TiccConfig(n_clusters=1, window_size=2)
    model, path = fit(x, cfg)
    assert set(path.labels.tolist()) == {0}
    X = stack_windows(x, 2)
    S = np.cov(X.T, bias=True) + cfg.ridge * np.eye(4)
    expected = solve_toeplitz_glasso(S, len(X), cfg, n_channels=2).theta
    assert np.allclose(model.clusters[0].theta, expected, rtol=1e-10, atol=1e-12)
    assert np.allclose(model.clusters[0].mu, X.mean(axis=0))


def test_planted_two_regimes_recovered(two_regimes):
    x, labels, _, _, path = two_regimes
    frames = expand_path_to_frames(path, len(x), 3)
    assert matched_macro_f1(frames, labels) >= 0.95


def test_boundaries_stable_across_seeds(two_regimes):
    x, _, _, _, path = two_regimes
    _, other = fit(x, TiccConfig(n_clusters=2, beta=5.0, seed=1))
    a = np.flatnonzero(np.diff(expand_path_to_frames(path, len(x), 3)))
    b = np.flatnonzero(np.diff(expand_path_to_frames(other, len(x), 3)))
    assert len(a) == len(b)
    assert np.all(np.abs(a - b) <= 3)


def test_predict_on_training_reproduces_fit(two_regimes):
    x, _, _, model, path = two_regimes
    assert np.array_equal(predict(model, x).labels, path.labels)


def test_unseen_regime_clip_assigned_to_its_cluster(two_regimes):
    x, labels, precisions, model, path = two_regimes
    mapping = match_clusters(expand_path_to_frames(path, len(x), 3), labels)
    fresh, _, _ = planted_regimes(400, 3, 3, 1, seg_len=(400, 400), seed=100, precisions=[precisions[0]])
    assigned = np.array([mapping[k] for k in predict(model, fresh).labels])
    assert np.mean(assigned == 0) >= 0.95


def test_predict_width_and_length_checks(two_regimes):
    model = two_regimes[3]
    with pytest.raises(DataError):
        predict(model, np.zeros((10, 2)))
    with pytest.raises(DataError):
        predict(model, np.zeros((2, 3)))


def test_em_objective_non_increasing():
    for seed in range(3):
        x, _, _ = planted_regimes(2000, 3, 3, 3, seed=seed)
        model, _ = fit(x, TiccConfig(n_clusters=3, beta=5.0, seed=0, n_init=1))
        assert np.all(np.diff(model.history) <= 1e-6)


def test_fitted_precisions_are_block_toeplitz_pd(two_regimes):
    for c in two_regimes[3].clusters:
        assert_block_toeplitz(c.theta, 3, 3)
        np.linalg.cholesky(c.theta)
        assert np.allclose(c.theta, c.theta.T)


def test_save_load_identical_predictions(two_regimes, tmp_path):
    x, _, _, model, _ = two_regimes
    model.save(tmp_path / "m.json")
    back = TiccModel.load(tmp_path / "m.json")
    for a, b in zip(model.clusters, back.clusters):
        assert np.array_equal(a.theta, b.theta) and np.array_equal(a.mu, b.mu)
    probe = np.random.default_rng(9).normal(size=(300, 3))
    assert np.array_equal(predict(model, probe).labels, predict(back, probe).labels)
    assert np.array_equal(predict(model, x).labels, predict(back, x).labels)


def test_fit_is_deterministic():
    x, _, _ = planted_regimes(800, 2, 2, 2, seg_len=(200, 300), seed=4)
    cfg = TiccConfig(n_clusters=2, window_size=2, seed=3)
    (m1, p1), (m2, p2) = fit(x, cfg), fit(x, cfg)
    assert np.array_equal(p1.labels, p2.labels)
    assert m1.to_dict() == m2.to_dict()


def test_standardized_fit_recovers_rescaled_plant():
    x, labels, _ = planted_regimes(1500, 3, 3, 2, seg_len=(500, 500), seed=0)
    x = x * np.array([100.0, 1.0, 0.01]) + np.array([5.0, -3.0, 0.0])
    model, path = fit(x, TiccConfig(n_clusters=2, beta=5.0, standardize=True))
    assert model.center is not None
    assert matched_macro_f1(expand_path_to_frames(path, len(x), 3), labels) >= 0.95


def test_null_windows_do_not_feed_valid_clusters():
    rng = np.random.default_rng(2)
    a, b = rng.normal(size=(300, 2)), rng.normal(size=(300, 2))
    x = np.vstack([a, np.full((100, 2), -1.0), b])
    null = np.zeros(len(x), bool)
    null[300:400] = True
    model, path = fit(x, TiccConfig(n_clusters=2, window_size=3, seed=0), null_mask=null)
    assert model.n_clusters == 3
    frames = expand_path_to_frames(path, len(x), 3)
    # the separator block lands in the extra cluster
    assert np.mean(frames[null] == 2) > 0.95
    X = stack_windows(x, 3)
    wnull = np.array([null[t:t + 3].any() for t in range(len(X))])
    for k in range(2):
        members = (path.labels == k) & ~wnull
        assert model.clusters[k].member_count == int(members.sum())
        assert np.allclose(model.clusters[k].mu, X[members].mean(axis=0))


def test_constant_series_with_several_clusters_does_not_crash():
    x = np.zeros((60, 2))
    with pytest.warns(RuntimeWarning, match="no members"):
        model, path = fit(x, TiccConfig(n_clusters=3, window_size=2, em_max_iter=5, n_init=1))
    assert len(path.labels) == 59
    assert model.notes


@pytest.mark.parametrize("kw", [{"n_clusters": 0}, {"window_size": 0}, {"beta": -1}, {"rho": 0},
                                {"lam": -0.1}, {"admm_eps_abs": 0}])
def test_config_invariants(kw):
    with pytest.raises(DataError):
        TiccConfig(**kw)


def test_lambda_matrix_leaves_diagonal_free():
    lam = TiccConfig(lam=0.3).lambda_matrix(4)
    assert np.all(np.diag(lam) == 0) and lam[0, 1] == 0.3
