import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import filled_stats, random_spd, random_trajectories, ridge_lsvi_q
from delayed_psvi.agents import (
    LmcParams,
    Policy,
    StepStatistics,
    act,
    assemble_targets,
    delayed_loss,
    delayed_loss_gradient,
    ingest_arrivals,
    lmc,
    lmc_closed_form,
    lpsvi_plan,
    psvi_plan,
    ucbvi_plan,
)
from delayed_psvi.environment import LinearMDP, Trajectory
from delayed_psvi.errors import Divergence, IndexOutOfRange, StepTooLarge


def two_feature_mdp():
    return LinearMDP(np.eye(2)[None], np.array([[0.5, 0.5]]), np.ones((1, 1, 2)))


def one_transition(a):
    return Trajectory(1, np.array([0, 0]), np.array([a]), np.array([0.5]))


# statistics


def test_ingest_empty_is_noop(synthetic):
    stats = StepStatistics.for_mdp(synthetic)
    before = stats.gram().copy()
    ingest_arrivals(stats, [])
    assert np.array_equal(stats.gram(), before)
    assert stats.count.sum() == 0


def test_ingest_single_transition():
    stats = StepStatistics.for_mdp(two_feature_mdp(), lam=1.0, sigma=1.0)
    ingest_arrivals(stats, [one_transition(0)])
    np.testing.assert_array_equal(stats.gram()[0, 0], [[2.0, 0.0], [0.0, 1.0]])


@pytest.mark.parametrize("sigma", [1.0, 0.1])
def test_gram_matches_recompute(synthetic, sigma):
    trajs = random_trajectories(synthetic, 50, seed=3)
    stats = StepStatistics.for_mdp(synthetic, lam=2.0, sigma=sigma)
    ingest_arrivals(stats, trajs[:20])
    ingest_arrivals(stats, trajs[20:])
    for h in range(synthetic.horizon):
        phi = np.array([synthetic.features[t.states[h], t.actions[h]] for t in trajs])
        expected = phi.T @ phi / sigma**2 + 2.0 * np.eye(10)
        np.testing.assert_allclose(stats.gram()[0, h], expected, rtol=0, atol=1e-12 * np.abs(expected).max())
        # Omega - lam I stays PSD
        assert np.linalg.eigvalsh(stats.gram()[0, h] - 2.0 * np.eye(10)).min() >= -1e-9


def test_targets_terminal_and_empty(synthetic):
    stats = filled_stats(synthetic, 10, sigma=0.5)
    b = assemble_targets(stats, 1, np.zeros(2))
    np.testing.assert_allclose(b, stats.reward_vec[0, 1] / 0.25)
    fresh = StepStatistics.for_mdp(synthetic)
    assert np.array_equal(assemble_targets(fresh, 0, np.array([1.0, 2.0])), np.zeros(10))


@given(st.integers(0, 2**32 - 1), st.integers(1, 30))
def test_targets_match_naive_sum(seed, n):
    from delayed_psvi.environment import build_riverswim_mdp

    mdp = build_riverswim_mdp(4)
    stats = filled_stats(mdp, n, sigma=0.7, seed=seed)
    rng = np.random.default_rng(seed)
    for h in range(mdp.horizon):
        v = rng.uniform(0, mdp.horizon - h - 1, size=mdp.num_states)
        naive = sum(
            mdp.features[t.states[h], t.actions[h]] * (t.rewards[h] + v[t.states[h + 1]]) for t in stats.arrived[0]
        ) / 0.7**2
        np.testing.assert_allclose(assemble_targets(stats, h, v), naive, atol=1e-12)


# PSVI


def test_psvi_zero_noise_is_ridge_lsvi(synthetic):
    stats = filled_stats(synthetic, 40, lam=1.0, sigma=0.5, seed=4)
    policy = psvi_plan(stats, synthetic, nu=0.0, M=1, rng=np.random.default_rng(0))
    oracle = ridge_lsvi_q(synthetic, stats.arrived[0], lam=1.0, sigma=0.5)
    np.testing.assert_allclose(policy.q[0], oracle, rtol=0, atol=1e-10)


def test_psvi_ensemble_dominates_members(synthetic):
    stats = filled_stats(synthetic, 30, seed=5)
    policy = psvi_plan(stats, synthetic, nu=3.0, M=4, rng=np.random.default_rng(1))
    members = np.einsum("sad,hmd->hmsa", synthetic.features, policy.weights[0])
    np.testing.assert_allclose(policy.q[0], members.max(axis=1), atol=1e-12)
    assert np.all(policy.q[0][:, None] >= members - 1e-12)


def test_psvi_ensemble_monotone_in_M(synthetic):
    stats = filled_stats(synthetic, 30, seed=6)
    last = synthetic.horizon - 1
    prev = None
    for M in (1, 2, 5, 9):
        q = psvi_plan(stats, synthetic, nu=2.0, M=M, rng=np.random.default_rng(11)).q[0, last]
        if prev is not None:
            assert np.all(q >= prev - 1e-12)
        prev = q


def test_psvi_fresh_stats_max_of_gaussians(synthetic):
    """At k = 1 each Q value is the max of M draws from N(0, nu^2 ||phi||^2 / lam)."""
    R, M, nu, lam = 10_000, 2, 1.5, 2.0
    stats = StepStatistics.for_mdp(synthetic, lam=lam, num_replicates=R)
    rngs = [np.random.default_rng(i) for i in range(R)]
    policy = psvi_plan(stats, synthetic, nu=nu, M=M, rng=rngs)
    s, a = 1, 3
    x = policy.q[:, 0, s, a]
    scale = nu * np.linalg.norm(synthetic.features[s, a]) / math.sqrt(lam)
    # E[max(Z1, Z2)] = 1/sqrt(pi), Var = 1 - 1/pi for standard normals
    mean, sd = scale / math.sqrt(math.pi), scale * math.sqrt(1 - 1 / math.pi)
    assert abs(x.mean() - mean) <= 3 * sd / math.sqrt(R)


def test_replicates_are_independent_of_batching(synthetic):
    trajs = [random_trajectories(synthetic, 15, seed=s) for s in range(3)]
    batch = StepStatistics.for_mdp(synthetic, num_replicates=3)
    for i, t in enumerate(trajs):
        batch.ingest(t, i)
    together = psvi_plan(batch, synthetic, 2.0, 2, [np.random.default_rng(100 + i) for i in range(3)])
    for i, t in enumerate(trajs):
        solo_stats = StepStatistics.for_mdp(synthetic)
        solo_stats.ingest(t)
        solo = psvi_plan(solo_stats, synthetic, 2.0, 2, np.random.default_rng(100 + i))
        np.testing.assert_allclose(together.q[i], solo.q[0], rtol=0, atol=1e-12)


# LMC


def test_lmc_zero_iterations_returns_start():
    w0 = np.array([1.0, -2.0])
    out = lmc(np.eye(2) * 3, np.ones(2), w0, LmcParams(iterations=0), np.random.default_rng(0))
    assert np.array_equal(out, w0)


@given(st.integers(0, 2**32 - 1), st.integers(1, 60))
def test_lmc_noiseless_contraction(seed, N):
    rng = np.random.default_rng(seed)
    omega = random_spd(rng, 4)
    b, w0 = rng.standard_normal(4), 5 * rng.standard_normal(4)
    evals = np.linalg.eigvalsh(omega)
    eta = 1 / (4 * evals[-1])
    out = lmc(omega, b, w0, LmcParams(iterations=N, temperature=0.0, step_size=eta), rng)
    w_hat = np.linalg.solve(omega, b)
    rate = (1 - 2 * eta * evals[0]) ** N
    assert np.linalg.norm(out - w_hat) <= rate * np.linalg.norm(w0 - w_hat) + 1e-10


def test_lmc_reproducible():
    omega = random_spd(np.random.default_rng(0), 3)
    p = LmcParams(iterations=10, temperature=0.5, step_size=0.01)
    a = lmc(omega, np.ones(3), np.zeros(3), p, np.random.default_rng(5))
    b = lmc(omega, np.ones(3), np.zeros(3), p, np.random.default_rng(5))
    assert np.array_equal(a, b)


def test_lmc_divergence():
    with pytest.raises(Divergence):
        lmc(np.eye(2) * 10, np.ones(2), np.ones(2), LmcParams(iterations=200, temperature=0.0, step_size=1.0),
            np.random.default_rng(0))


def test_lmc_empirical_law_matches_closed_form():
    rng = np.random.default_rng(8)
    omega = random_spd(rng, 3)
    b, w0 = rng.standard_normal(3), rng.standard_normal(3)
    eta, N, gamma, runs = 1 / (4 * np.linalg.eigvalsh(omega)[-1]), 10, 0.3, 100_000
    out = lmc(omega, b, np.tile(w0[:, None], (1, runs)), LmcParams(N, gamma, step_size=eta), rng)
    mean, cov = lmc_closed_form(omega, b, w0, eta, N, gamma)
    se = np.sqrt(np.diag(cov) / runs)
    assert np.all(np.abs(out.mean(axis=1) - mean) <= 4 * se)


def test_closed_form_scalar_hand_recursion():
    gamma, w0, b = 0.7, 3.0, 2.0
    mean, cov = lmc_closed_form([[1.0]], [b], [w0], eta=0.25, N=2, gamma=gamma)
    w_hat = b
    assert mean[0] == pytest.approx(0.25 * w0 + 0.75 * w_hat)
    assert cov[0, 0] == pytest.approx(0.625 * gamma)


@given(st.integers(0, 2**32 - 1), st.integers(0, 50))
def test_closed_form_fixed_point_and_bracket(seed, N):
    rng = np.random.default_rng(seed)
    omega = random_spd(rng, 5, floor=0.5)
    b = rng.standard_normal(5)
    w_hat = np.linalg.solve(omega, b)
    evals = np.linalg.eigvalsh(omega)
    eta, gamma = 1 / (4 * evals[-1]), 0.02
    mean, theta = lmc_closed_form(omega, b, w_hat, eta, N, gamma)
    np.testing.assert_allclose(mean, w_hat, atol=1e-10 * max(1, np.abs(w_hat).max()))
    inv = np.linalg.inv(omega)
    kappa = evals[-1] / evals[0]
    low = gamma / 2 * (1 - (1 - 1 / (2 * kappa)) ** (2 * N)) * inv
    tol = 1e-10 * gamma * np.abs(inv).max()
    assert np.linalg.eigvalsh(theta - low).min() >= -tol
    assert np.linalg.eigvalsh(gamma * inv - theta).min() >= -tol


def test_closed_form_rejects_large_step():
    with pytest.raises(StepTooLarge):
        lmc_closed_form(np.eye(2), np.zeros(2), np.zeros(2), eta=0.5, N=3, gamma=1.0)


@given(st.integers(0, 2**32 - 1))
def test_gradient_matches_finite_differences(seed):
    from delayed_psvi.environment import build_synthetic_mdp

    mdp = build_synthetic_mdp(8, 3, alpha=[1, 0, 1])
    stats = filled_stats(mdp, 12, lam=1.0, seed=seed)
    rng = np.random.default_rng(seed)
    h = int(rng.integers(0, 3))
    v = rng.uniform(0, 3 - h - 1, size=2)
    w = rng.standard_normal(10)
    grad = delayed_loss_gradient(stats, h, v, w)
    eps, fd = 1e-5, np.empty(10)
    for i in range(10):
        e = np.zeros(10)
        e[i] = eps
        fd[i] = (delayed_loss(stats, h, v, w + e) - delayed_loss(stats, h, v, w - e)) / (2 * eps)
    assert np.linalg.norm(grad - fd) <= 1e-6 * np.linalg.norm(grad)


# LPSVI


def test_lpsvi_noiseless_converges_to_ridge(synthetic):
    stats = filled_stats(synthetic, 40, seed=9)
    evals = np.linalg.eigvalsh(stats.gram()[0])
    factor = 1 - (evals[:, 0] / evals[:, -1]).min()
    N = math.ceil(math.log(1e-8) / math.log(factor)) + 1
    params = LmcParams(iterations=N, temperature=0.0, chains=1, c_eta=0.5)
    policy, _ = lpsvi_plan(stats, synthetic, params, np.random.default_rng(0))
    np.testing.assert_allclose(policy.q[0], ridge_lsvi_q(synthetic, stats.arrived[0], 1.0), atol=1e-6)


def test_lpsvi_fresh_stats_distribution(synthetic):
    R, gamma, N, lam = 10_000, 0.5, 5, 1.0
    stats = StepStatistics.for_mdp(synthetic, lam=lam, num_replicates=R)
    params = LmcParams(iterations=N, temperature=gamma, chains=1, c_eta=0.25)
    policy, _ = lpsvi_plan(stats, synthetic, params, [np.random.default_rng(i) for i in range(R)])
    w = policy.weights[:, 0, 0]  # (R, d), step 0, chain 0
    eta = 0.25 / lam
    mean, theta = lmc_closed_form(lam * np.eye(10), np.zeros(10), np.zeros(10), eta, N, gamma)
    assert np.linalg.norm(w.mean(axis=0) - mean) <= 4 * math.sqrt(np.trace(theta) / R)
    np.testing.assert_allclose(np.cov(w.T), theta, atol=4 * np.diag(theta).max() * math.sqrt(2 / R))


def test_lpsvi_ensemble_and_warm_start(synthetic):
    stats = filled_stats(synthetic, 20, seed=10)
    params = LmcParams(iterations=30, temperature=0.1, chains=2, warm_start=True)
    policy, warm = lpsvi_plan(stats, synthetic, params, np.random.default_rng(1))
    members = np.einsum("sad,hmd->hmsa", synthetic.features, policy.weights[0])
    assert np.all(policy.q[0][:, None] >= members - 1e-12)
    assert warm.shape == (1, synthetic.horizon, 2, 10)
    frozen = LmcParams(iterations=0, temperature=0.1, chains=2, warm_start=True)
    again, _ = lpsvi_plan(stats, synthetic, frozen, np.random.default_rng(2), warm)
    np.testing.assert_array_equal(again.weights, warm)
    cold, _ = lpsvi_plan(stats, synthetic, LmcParams(iterations=0, chains=2), np.random.default_rng(2), warm)
    assert np.all(cold.weights == 0)


# UCBVI


def test_ucbvi_zero_bonus_is_ridge(riverswim):
    stats = filled_stats(riverswim, 25, seed=12)
    policy = ucbvi_plan(stats, riverswim, 0.0)
    np.testing.assert_allclose(policy.q[0], ridge_lsvi_q(riverswim, stats.arrived[0], 1.0), atol=1e-10)


def test_ucbvi_fresh_bonus(synthetic):
    beta, lam = 0.7, 4.0
    policy = ucbvi_plan(StepStatistics.for_mdp(synthetic, lam=lam), synthetic, beta)
    expected = beta * np.linalg.norm(synthetic.features, axis=-1) / math.sqrt(lam)
    for h in range(synthetic.horizon):
        np.testing.assert_allclose(policy.q[0, h], expected, atol=1e-12)


def test_ucbvi_bonus_nonnegative(synthetic):
    stats = filled_stats(synthetic, 25, seed=13)
    policy = ucbvi_plan(stats, synthetic, np.linspace(0, 2, synthetic.horizon))
    assert policy.bonus.min() >= 0


# greedy rule


@pytest.mark.parametrize(
    "row, cap, expected",
    [((0.2, 0.9, 0.9), 1.0, 1), ((5.0, 3.0), 2.0, 0), ((0.5, 1.5), 1.0, 1)],
)
def test_act_truncation_and_ties(row, cap, expected):
    policy = Policy(np.array(row).reshape(1, 1, 1, -1), np.zeros((1, 1, 1, 1)), np.array([cap]))
    assert act(policy, 0, 0) == expected
    assert policy.action_table()[0, 0, 0] == expected


def test_act_index_check():
    policy = Policy(np.zeros((1, 2, 1, 2)), np.zeros((1, 2, 1, 1)), np.array([2.0, 1.0]))
    with pytest.raises(IndexOutOfRange):
        act(policy, 2, 0)
