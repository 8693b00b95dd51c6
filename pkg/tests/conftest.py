import numpy as np
import pytest
from hypothesis import settings

from delayed_psvi.agents import StepStatistics
from delayed_psvi.environment import build_riverswim_mdp, build_synthetic_mdp

settings.register_profile("default", max_examples=50, deadline=None)
settings.register_profile("fast", max_examples=10, deadline=None)
settings.load_profile("default")

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def report():
    def _report(criterion, passed, detail):
        ACCEPTANCE_LINES.append(f"[{'PASS' if passed else 'FAIL'}] criterion {criterion}: {detail}")
        print(ACCEPTANCE_LINES[-1])

    return _report


def random_spd(rng, d, floor=1.0):
    x = rng.standard_normal((d, d))
    return x @ x.T + floor * np.eye(d)


@pytest.fixture
def synthetic():
    return build_synthetic_mdp(num_actions=6, horizon=4, alpha=[0, 1, 1, 0])


@pytest.fixture
def riverswim():
    return build_riverswim_mdp(horizon=5)


def random_trajectories(mdp, n, seed=0, first_episode=1):
    """Trajectories from uniformly random actions, for filling statistics."""
    from delayed_psvi.environment import rollout

    rng = np.random.default_rng(seed)
    out = []
    for j in range(n):
        table = rng.integers(0, mdp.num_actions, size=(mdp.horizon, mdp.num_states))
        traj, _ = rollout(mdp, table, rng, origin_episode=first_episode + j)
        out.append(traj)
    return out


def filled_stats(mdp, n, lam=1.0, sigma=1.0, seed=0):
    stats = StepStatistics.for_mdp(mdp, lam, sigma)
    stats.ingest(random_trajectories(mdp, n, seed))
    return stats


def ridge_lsvi_q(mdp, trajectories, lam, sigma=1.0):
    """Brute-force truncated ridge LSVI from raw transitions (explicit Phi and y)."""
    H, S, A = mdp.horizon, mdp.num_states, mdp.num_actions
    q = np.zeros((H, S, A))
    v_next = np.zeros(S)
    for h in range(H - 1, -1, -1):
        phi = np.array([mdp.features[t.states[h], t.actions[h]] for t in trajectories]).reshape(-1, mdp.dim)
        y = np.array([t.rewards[h] + v_next[t.states[h + 1]] for t in trajectories])
        omega = phi.T @ phi / sigma**2 + lam * np.eye(mdp.dim)
        w = np.linalg.solve(omega, phi.T @ y / sigma**2) if len(y) else np.zeros(mdp.dim)
        q[h] = mdp.features @ w
        v_next = np.clip(np.minimum(q[h], H - h).max(axis=1), 0, H - h)
    return q
