"""Finite linear MDPs, the synthetic and RiverSwim instances, rollouts and exact DP.

Steps are indexed from 0 in code: step ``h`` in ``0..H-1`` has remaining
horizon ``H - h`` (the value cap used for truncation).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import DimensionMismatch, IndexOutOfRange, TooManyActions

PROB_TOL = 1e-12
SUM_TOL = 1e-9

FEATURE = "feature"
TABULAR_OVERRIDE = "tabular-override"

# RiverSwim right-action dynamics, rows = s, cols = s'. Left is deterministic.
RIVERSWIM_RIGHT = np.array(
    [
        [0.7, 0.3, 0.0, 0.0, 0.0],
        [0.1, 0.6, 0.3, 0.0, 0.0],
        [0.0, 0.1, 0.6, 0.3, 0.0],
        [0.0, 0.0, 0.1, 0.6, 0.3],
        [0.0, 0.0, 0.0, 0.4, 0.6],
    ]
)
LEFT, RIGHT = 0, 1


@dataclass(eq=False)
class LinearMDP:
    """Episodic linear MDP with ``P_h(s'|s,a) = phi(s,a)^T mu_h(s')``.

    ``features`` is ``(S, A, d)``, ``reward_weights`` is ``(H, d)`` and
    ``transition_measures`` is ``(H, S, d)`` (one measure vector per next
    state). When ``reward_override`` (``(H, S, A)``) is given it replaces the
    linear reward ``phi^T theta_h``.

    The feature-norm bound ``||phi|| <= 1`` is not enforced; the synthetic
    instance has features of norm up to 3.
    """

    features: np.ndarray
    reward_weights: np.ndarray
    transition_measures: np.ndarray
    initial_state: int = 0
    reward_override: Optional[np.ndarray] = None
    name: str = "linear-mdp"
    transitions: np.ndarray = field(init=False, repr=False)
    rewards: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float)
        self.reward_weights = np.asarray(self.reward_weights, dtype=float)
        self.transition_measures = np.asarray(self.transition_measures, dtype=float)
        S, A, d = self.features.shape
        H = self.reward_weights.shape[0]
        if self.reward_weights.shape != (H, d) or self.transition_measures.shape != (H, S, d):
            raise DimensionMismatch("reward_weights must be (H, d) and transition_measures (H, S, d)")
        if not 0 <= self.initial_state < S:
            raise IndexOutOfRange(f"initial state {self.initial_state} not in [0, {S})")

        probs = np.einsum("sad,htd->hsat", self.features, self.transition_measures)
        if probs.min() < -PROB_TOL or probs.max() > 1 + PROB_TOL:
            raise ValueError("transition probabilities leave [0, 1]")
        if np.abs(probs.sum(axis=-1) - 1.0).max() > SUM_TOL:
            raise ValueError("transition rows do not sum to 1")
        self.transitions = np.clip(probs, 0.0, 1.0)
        self.transitions.setflags(write=False)

        if self.reward_override is not None:
            rewards = np.broadcast_to(np.asarray(self.reward_override, dtype=float), (H, S, A)).copy()
        else:
            rewards = np.einsum("sad,hd->hsa", self.features, self.reward_weights)
        if rewards.min() < -PROB_TOL or rewards.max() > 1 + PROB_TOL:
            raise ValueError("rewards leave [0, 1]")
        self.rewards = rewards
        self.rewards.setflags(write=False)

    @property
    def num_states(self) -> int:
        return self.features.shape[0]

    @property
    def num_actions(self) -> int:
        return self.features.shape[1]

    @property
    def dim(self) -> int:
        return self.features.shape[2]

    @property
    def horizon(self) -> int:
        return self.reward_weights.shape[0]

    @property
    def caps(self) -> np.ndarray:
        """Truncation level ``H - h`` for each 0-based step."""
        return np.arange(self.horizon, 0, -1, dtype=float)

    def reward(self, h: int, s: int, a: int) -> float:
        return float(self.rewards[h, s, a])


def action_bits(a: int, width: int = 8) -> np.ndarray:
    return np.array([(a >> (width - 1 - i)) & 1 for i in range(width)], dtype=float)


def draw_alpha(horizon: int, rng: np.random.Generator) -> np.ndarray:
    return rng.integers(0, 2, size=horizon)


def build_synthetic_mdp(
    num_actions: int,
    horizon: int,
    r: float = 0.99,
    alpha: Sequence[int] | None = None,
    reward_mode: str = FEATURE,
) -> LinearMDP:
    """Two-state linear MDP whose actions are embedded by their 8-bit codes.

    ``phi(s, a) = [bits(a), delta, 1 - delta]`` with ``delta = 1`` iff
    ``(s == 0) == (a == 0)``. In ``feature`` mode the reward is
    ``phi^T theta_h`` (``r`` when ``delta = 1``, else ``1 - r``); in
    ``tabular-override`` mode only ``(s, a) = (0, 0)`` earns ``r``.
    Next state is ``alpha_h`` when ``delta = 1`` and ``1 - alpha_h`` otherwise.
    """
    if num_actions > 256:
        raise TooManyActions(f"{num_actions} actions do not fit in 8-bit codes")
    if num_actions < 1 or horizon < 1:
        raise ValueError("num_actions and horizon must be positive")
    if not 0.0 < r < 1.0:
        raise ValueError("r must lie in (0, 1)")
    alpha = np.zeros(horizon, dtype=int) if alpha is None else np.asarray(alpha, dtype=int)
    if alpha.shape != (horizon,) or not np.isin(alpha, (0, 1)).all():
        raise ValueError("alpha must be a length-H bit sequence")
    if reward_mode not in (FEATURE, TABULAR_OVERRIDE):
        raise ValueError(f"unknown reward_mode {reward_mode!r}")

    S, d = 2, 10
    features = np.zeros((S, num_actions, d))
    for s in range(S):
        for a in range(num_actions):
            delta = float((s == 0) == (a == 0))
            features[s, a, :8] = action_bits(a)
            features[s, a, 8:] = (delta, 1.0 - delta)

    theta = np.zeros((horizon, d))
    theta[:, 8:] = (r, 1.0 - r)
    mu = np.zeros((horizon, S, d))
    for h, bit in enumerate(alpha):
        for s_next in range(S):
            mu[h, s_next, 8:] = ((1 - s_next) ^ bit, s_next ^ bit)

    override = None
    if reward_mode == TABULAR_OVERRIDE:
        override = np.full((horizon, S, num_actions), 1.0 - r)
        override[:, 0, 0] = r
    return LinearMDP(features, theta, mu, initial_state=0, reward_override=override, name="synthetic")


def build_riverswim_mdp(horizon: int, right_dynamics: np.ndarray = RIVERSWIM_RIGHT) -> LinearMDP:
    """Five-state RiverSwim with one-hot features ``e_{2s + a}`` (left=0, right=1)."""
    if horizon < 1:
        raise ValueError("horizon must be positive")
    S, A = right_dynamics.shape[0], 2
    d = S * A
    features = np.eye(d).reshape(S, A, d)

    table = np.zeros((S, A, S))
    for s in range(S):
        table[s, LEFT, max(s - 1, 0)] = 1.0
    table[:, RIGHT, :] = right_dynamics
    # mu(s')[2s + a] = P(s' | s, a), the same for every step.
    mu = np.broadcast_to(table.reshape(d, S).T, (horizon, S, d)).copy()

    theta = np.zeros((horizon, d))
    theta[:, 0] = 0.005
    theta[:, d - 1] = 1.0
    return LinearMDP(features, theta, mu, initial_state=0, name="riverswim")


def transition_probs(mdp: LinearMDP, h: int, s: int, a: int) -> np.ndarray:
    if not (0 <= h < mdp.horizon and 0 <= s < mdp.num_states and 0 <= a < mdp.num_actions):
        raise IndexOutOfRange(f"(h={h}, s={s}, a={a}) out of range")
    return mdp.transitions[h, s, a]


@dataclass(frozen=True)
class Trajectory:
    origin_episode: int
    states: np.ndarray  # (H + 1,), states[h + 1] is the next state of step h
    actions: np.ndarray
    rewards: np.ndarray

    @property
    def horizon(self) -> int:
        return len(self.actions)

    @property
    def total_return(self) -> float:
        return float(self.rewards.sum())

    @property
    def steps(self) -> list[tuple[int, int, float, int]]:
        return [
            (int(self.states[h]), int(self.actions[h]), float(self.rewards[h]), int(self.states[h + 1]))
            for h in range(self.horizon)
        ]


@dataclass(frozen=True)
class ValueTable:
    v: np.ndarray  # (H + 1, S), last row is zero
    q: np.ndarray  # (H, S, A)


def as_action_tables(policy) -> np.ndarray:
    """Deterministic action tables with a leading replicate axis, ``(R, H, S)``."""
    table = policy.action_table() if hasattr(policy, "action_table") else np.asarray(policy)
    if table.ndim == 2:
        table = table[None]
    return table.astype(np.intp, copy=False)


def rollout_batch(
    mdp: LinearMDP, actions: np.ndarray, rngs: Sequence[np.random.Generator], origin_episode: int = 0
) -> list[Trajectory]:
    """Roll out one episode per replicate; replicate ``i`` draws only from ``rngs[i]``."""
    R, H = actions.shape[0], mdp.horizon
    if actions.shape != (R, H, mdp.num_states) or len(rngs) != R:
        raise DimensionMismatch("need an (R, H, S) action table and one rng per replicate")
    u = np.stack([g.random(H) for g in rngs])
    cum = np.cumsum(mdp.transitions, axis=-1)[..., :-1]
    rows = np.arange(R)
    states = np.empty((R, H + 1), dtype=np.intp)
    acts = np.empty((R, H), dtype=np.intp)
    rewards = np.empty((R, H))
    states[:, 0] = mdp.initial_state
    for h in range(H):
        s = states[:, h]
        a = actions[rows, h, s]
        acts[:, h] = a
        rewards[:, h] = mdp.rewards[h, s, a]
        states[:, h + 1] = (u[:, h, None] >= cum[h, s, a]).sum(axis=-1)
    return [Trajectory(origin_episode, states[i], acts[i], rewards[i]) for i in range(R)]


def rollout(mdp: LinearMDP, policy, rng: np.random.Generator, origin_episode: int = 0) -> tuple[Trajectory, float]:
    actions = as_action_tables(policy)
    if actions.shape[0] != 1:
        raise DimensionMismatch("rollout takes a single-replicate policy; use rollout_batch")
    traj = rollout_batch(mdp, actions, [rng], origin_episode)[0]
    return traj, traj.total_return


def exact_optimal_values(mdp: LinearMDP) -> ValueTable:
    H, S = mdp.horizon, mdp.num_states
    v = np.zeros((H + 1, S))
    q = np.zeros((H, S, mdp.num_actions))
    for h in range(H - 1, -1, -1):
        q[h] = mdp.rewards[h] + mdp.transitions[h] @ v[h + 1]
        v[h] = q[h].max(axis=1)
    return ValueTable(v, q)


def evaluate_actions(mdp: LinearMDP, actions: np.ndarray) -> np.ndarray:
    """Exact ``V_1^pi(s_1)`` for each replicate's deterministic table ``(R, H, S)``."""
    R = actions.shape[0]
    states = np.arange(mdp.num_states)
    v = np.zeros((R, mdp.num_states))
    for h in range(mdp.horizon - 1, -1, -1):
        a = actions[:, h, :]
        p = mdp.transitions[h][states, a]  # (R, S, S')
        v = mdp.rewards[h][states, a] + np.einsum("rst,rt->rs", p, v)
    return v[:, mdp.initial_state]


def evaluate_policy(mdp: LinearMDP, policy) -> float:
    """Exact value of ``policy`` from the initial state.

    ``policy`` is a single-replicate ``Policy``, an ``(H, S)`` action table, or
    an ``(H, S, A)`` table of action probabilities.
    """
    table = policy.action_table() if hasattr(policy, "action_table") else np.asarray(policy)
    if table.ndim == 3 and np.issubdtype(table.dtype, np.floating):
        v = np.zeros(mdp.num_states)
        for h in range(mdp.horizon - 1, -1, -1):
            q = mdp.rewards[h] + mdp.transitions[h] @ v
            v = (table[h] * q).sum(axis=1)
        return float(v[mdp.initial_state])
    actions = as_action_tables(table)
    if actions.shape[0] != 1:
        raise DimensionMismatch("evaluate_policy takes a single-replicate policy; use evaluate_actions")
    return float(evaluate_actions(mdp, actions)[0])
