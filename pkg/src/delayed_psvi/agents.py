"""Delayed-PSVI, Delayed-LPSVI and Delayed-UCBVI planners.

All planners share :class:`StepStatistics`, the per-step sufficient statistics
built from the feedback that has arrived so far. Arrays carry a leading
replicate axis ``R`` so that independent runs (seeds) of one configuration
can be planned together; the single-run case is simply ``R = 1``. Replicate
``i`` only ever draws from its own generator, so its results do not depend on
which other replicates share the batch.

Steps are 0-based; the truncation level at step ``h`` is ``H - h``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .environment import LinearMDP, Trajectory
from .errors import DimensionMismatch, Divergence, IndexOutOfRange, StepTooLarge
from .numerics import batched_cholesky, max_eigenvalue

DIVERGENCE_NORM = 1e6


@dataclass(eq=False)
class StepStatistics:
    """Gram matrices and target aggregates per step, for ``R`` replicates.

    ``gram_raw[r, h]`` is the sum of ``phi phi^T`` over arrived transitions at
    step ``h``; the regularized Gram is ``sigma^-2 * gram_raw + lam * I``.
    ``next_state_agg[r, h, s']`` sums ``phi`` over arrived transitions that
    landed in ``s'``, so targets for any value function can be rebuilt
    without revisiting raw data. ``shadow_raw`` is the same Gram built from
    every finished episode regardless of delay.
    """

    features: np.ndarray
    horizon: int
    lam: float = 1.0
    sigma: float = 1.0
    num_replicates: int = 1
    gram_raw: np.ndarray = field(init=False)
    reward_vec: np.ndarray = field(init=False)
    next_state_agg: np.ndarray = field(init=False)
    count: np.ndarray = field(init=False)
    shadow_raw: np.ndarray = field(init=False)
    arrived: list = field(init=False)

    def __post_init__(self):
        if self.lam <= 0:
            raise ValueError("lam must be positive")
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        S, _, d = self.features.shape
        R, H = self.num_replicates, self.horizon
        self.gram_raw = np.zeros((R, H, d, d))
        self.reward_vec = np.zeros((R, H, d))
        self.next_state_agg = np.zeros((R, H, S, d))
        self.count = np.zeros((R, H), dtype=np.int64)
        self.shadow_raw = np.zeros((R, H, d, d))
        self.arrived = [[] for _ in range(R)]

    @classmethod
    def for_mdp(cls, mdp: LinearMDP, lam: float = 1.0, sigma: float = 1.0, num_replicates: int = 1):
        return cls(mdp.features, mdp.horizon, lam, sigma, num_replicates)

    @property
    def dim(self) -> int:
        return self.features.shape[2]

    @property
    def num_states(self) -> int:
        return self.features.shape[0]

    def _regularize(self, raw: np.ndarray) -> np.ndarray:
        return raw / self.sigma**2 + self.lam * np.eye(self.dim)

    def gram(self) -> np.ndarray:
        """Regularized delayed Gram ``Omega``, shape ``(R, H, d, d)``."""
        return self._regularize(self.gram_raw)

    def shadow_gram(self) -> np.ndarray:
        """Full-information Gram ``Sigma`` under the same scaling as :meth:`gram`."""
        return self._regularize(self.shadow_raw)

    def _step_features(self, traj: Trajectory) -> np.ndarray:
        if traj.horizon != self.horizon:
            raise DimensionMismatch(f"trajectory of length {traj.horizon}, expected {self.horizon}")
        return self.features[traj.states[:-1], traj.actions]

    def ingest(self, trajectories: Sequence[Trajectory], replicate: int = 0) -> None:
        steps = np.arange(self.horizon)
        for traj in trajectories:
            phi = self._step_features(traj)
            self.gram_raw[replicate] += phi[:, :, None] * phi[:, None, :]
            self.reward_vec[replicate] += phi * traj.rewards[:, None]
            self.next_state_agg[replicate, steps, traj.states[1:]] += phi
            self.count[replicate] += 1
            self.arrived[replicate].append(traj)

    def ingest_shadow(self, trajectories: Sequence[Trajectory], replicate: int = 0) -> None:
        for traj in trajectories:
            phi = self._step_features(traj)
            self.shadow_raw[replicate] += phi[:, :, None] * phi[:, None, :]

    def targets(self, h: int, v_next: np.ndarray) -> np.ndarray:
        """``sigma^-2 * sum phi (r + v_next(s'))`` for every replicate; ``v_next`` is ``(R, S)``."""
        agg = np.einsum("rsd,rs->rd", self.next_state_agg[:, h], v_next)
        return (self.reward_vec[:, h] + agg) / self.sigma**2


def ingest_arrivals(stats: StepStatistics, trajectories: Sequence[Trajectory], replicate: int = 0) -> None:
    stats.ingest(trajectories, replicate)


def assemble_targets(stats: StepStatistics, h: int, v_next, replicate: int = 0) -> np.ndarray:
    """Right-hand side ``b`` of ``w_hat = Omega^-1 b`` at step ``h`` for one replicate."""
    v = np.zeros((stats.num_replicates, stats.num_states))
    v[replicate] = v_next
    return stats.targets(h, v)[replicate]


@dataclass(eq=False)
class Policy:
    """Per-step ensembles and the greedy rule they induce.

    ``q[r, h, s, a]`` is the ensemble maximum (plus bonus for UCBVI);
    ``weights[r, h, m]`` are the ensemble members.
    """

    q: np.ndarray  # (R, H, S, A)
    weights: np.ndarray  # (R, H, M, d)
    caps: np.ndarray  # (H,)
    bonus: Optional[np.ndarray] = None  # (R, H, S, A), UCBVI only
    beta: Optional[np.ndarray] = None  # (H,), UCBVI only

    @property
    def num_replicates(self) -> int:
        return self.q.shape[0]

    @property
    def horizon(self) -> int:
        return self.q.shape[1]

    def truncated_q(self) -> np.ndarray:
        return np.minimum(self.q, self.caps[None, :, None, None])

    def action_table(self) -> np.ndarray:
        """Greedy actions ``(R, H, S)``; ``argmax`` keeps the lowest index on ties."""
        return self.truncated_q().argmax(axis=-1)

    def replicate(self, r: int) -> "Policy":
        sl = slice(r, r + 1)
        bonus = None if self.bonus is None else self.bonus[sl]
        return Policy(self.q[sl], self.weights[sl], self.caps, bonus, self.beta)


def act(policy: Policy, h: int, s: int, replicate: int = 0) -> int:
    R, H, S, _ = policy.q.shape
    if not (0 <= h < H and 0 <= s < S and 0 <= replicate < R):
        raise IndexOutOfRange(f"(h={h}, s={s}) out of range")
    return int(np.argmax(np.minimum(policy.q[replicate, h, s], policy.caps[h])))


def _as_rngs(rng, R: int) -> list[np.random.Generator]:
    rngs = [rng] if isinstance(rng, np.random.Generator) else list(rng)
    if len(rngs) != R:
        raise DimensionMismatch(f"need {R} generators, got {len(rngs)}")
    return rngs


def _backward_pass(stats: StepStatistics, mdp: LinearMDP, step):
    """Run ``step(h, b) -> (q_h, weights_h)`` for h = H-1..0, feeding truncated values back.

    The greedy value is clipped to ``[0, H - h]`` before it becomes a target.
    """
    if stats.horizon != mdp.horizon:
        raise DimensionMismatch("statistics and MDP horizons differ")
    R, H, S, A = stats.num_replicates, mdp.horizon, mdp.num_states, mdp.num_actions
    caps = mdp.caps
    q = np.empty((R, H, S, A))
    weights = [None] * H
    v_next = np.zeros((R, S))
    for h in range(H - 1, -1, -1):
        b = stats.targets(h, v_next)
        q[:, h], weights[h] = step(h, b)
        v_next = np.clip(np.minimum(q[:, h], caps[h]).max(axis=-1), 0.0, caps[h])
    return q, np.stack(weights, axis=1), caps


def _ensemble_q(features_flat: np.ndarray, w: np.ndarray, S: int, A: int) -> np.ndarray:
    """``max_m phi^T w_m`` for ``w`` of shape ``(R, d, M)``; returns ``(R, S, A)``."""
    return (features_flat @ w).max(axis=-1).reshape(-1, S, A)


def psvi_plan(stats: StepStatistics, mdp: LinearMDP, nu: float, M: int, rng) -> Policy:
    """Delayed-PSVI planning for the coming episode.

    At each step the ridge solution ``w_hat = Omega^-1 b`` is perturbed by
    ``M`` independent draws from ``N(0, nu^2 Omega^-1)``. ``rng`` is one
    generator per replicate; chain ``m`` consumes block ``m`` of a
    ``(M, H, d)`` standard-normal draw so ensembles share prefixes across M.
    """
    if nu < 0 or M < 1:
        raise ValueError("need nu >= 0 and M >= 1")
    R, H, d = stats.num_replicates, stats.horizon, stats.dim
    S, A = mdp.num_states, mdp.num_actions
    z = np.stack([g.standard_normal((M, H, d)) for g in _as_rngs(rng, R)])
    lower = batched_cholesky(stats.gram())
    upper = np.swapaxes(lower, -1, -2)
    feats = mdp.features.reshape(S * A, d)

    def step(h, b):
        y = np.linalg.solve(lower[:, h], b[..., None])
        rhs = np.concatenate([y, nu * np.swapaxes(z[:, :, h], 1, 2)], axis=-1)
        x = np.linalg.solve(upper[:, h], rhs)
        w = x[..., :1] + x[..., 1:]
        return _ensemble_q(feats, w, S, A), np.swapaxes(w, 1, 2)

    q, weights, caps = _backward_pass(stats, mdp, step)
    return Policy(q, weights, caps)


@dataclass(frozen=True)
class LmcParams:
    """LMC settings. ``step_size=None`` selects ``c_eta / lambda_max(Omega)`` per step."""

    iterations: int = 40
    temperature: float = 0.02
    chains: int = 1
    warm_start: bool = False
    step_size: Optional[float] = None
    c_eta: float = 0.5

    def __post_init__(self):
        if self.iterations < 0 or self.chains < 1 or self.temperature < 0:
            raise ValueError("need iterations >= 0, chains >= 1, temperature >= 0")
        if self.step_size is not None and self.step_size <= 0:
            raise ValueError("step_size must be positive")
        if self.c_eta <= 0:
            raise ValueError("c_eta must be positive")


def langevin_iterate(contraction: np.ndarray, drift: np.ndarray, w0: np.ndarray, noise: np.ndarray) -> np.ndarray:
    """Run ``w_t = A w_{t-1} + drift + noise_t`` for ``t = 1..N``.

    Shapes: ``A`` ``(..., d, d)``, ``drift`` ``(..., d)``, ``w0``
    ``(..., d, M)``, ``noise`` ``(..., N, d, M)`` (already scaled). The
    divergence check applies to the final iterate.
    """
    inc = drift[..., None, :, None] + noise
    w = w0
    with np.errstate(over="ignore", invalid="ignore"):
        for t in range(noise.shape[-3]):
            w = contraction @ w
            w += inc[..., t, :, :]
        norms = np.linalg.norm(w, axis=-2)
    if not np.all(np.isfinite(norms)) or norms.max(initial=0.0) > DIVERGENCE_NORM:
        raise Divergence("LMC iterate exceeded norm 1e6; reduce the step size")
    return w


def lmc(gram, target, w0, params: LmcParams, rng: np.random.Generator) -> np.ndarray:
    """Langevin Monte Carlo on ``L(w) = w^T Omega w - 2 b^T w`` (gradient ``2(Omega w - b)``).

    ``w0`` may be ``(d,)`` or ``(d, M)`` for ``M`` parallel chains; noise is
    drawn chain-major as ``(M, N, d)``.
    """
    gram = np.asarray(gram, dtype=float)
    target = np.asarray(target, dtype=float)
    w0 = np.asarray(w0, dtype=float)
    vector = w0.ndim == 1
    w = w0[:, None] if vector else w0
    d, M = w.shape
    if gram.shape != (d, d) or target.shape != (d,):
        raise DimensionMismatch("gram, target and w0 dimensions disagree")
    eta = params.step_size if params.step_size is not None else params.c_eta / max_eigenvalue(gram)
    N = params.iterations
    noise = np.sqrt(2 * eta * params.temperature) * rng.standard_normal((M, N, d)).transpose(1, 2, 0)
    out = langevin_iterate(np.eye(d) - 2 * eta * gram, 2 * eta * target, w, noise)
    return out[:, 0] if vector else out


def lmc_closed_form(gram, target, w0, eta: float, N: int, gamma: float) -> tuple[np.ndarray, np.ndarray]:
    """Exact Gaussian law of the LMC output after ``N`` steps.

    With ``A = I - 2 eta Omega`` and ``w_hat = Omega^-1 b``: mean
    ``A^N w0 + (I - A^N) w_hat``, covariance
    ``gamma (I - A^{2N}) Omega^-1 (I + A)^-1``. Computed in the eigenbasis of
    ``Omega``, independently of the iteration.
    """
    gram = np.asarray(gram, dtype=float)
    evals, evecs = np.linalg.eigh(gram)
    a = 1.0 - 2.0 * eta * evals
    if a.min() <= 0.0:
        raise StepTooLarge(f"eta={eta} gives I - 2 eta Omega with eigenvalue {a.min():.3g} <= 0")
    w_hat = evecs @ ((evecs.T @ np.asarray(target, dtype=float)) / evals)
    aN = a**N
    mean = evecs @ (aN * (evecs.T @ np.asarray(w0, dtype=float))) + evecs @ ((1 - aN) * (evecs.T @ w_hat))
    cov_diag = gamma * (1.0 - a ** (2 * N)) / (evals * (1.0 + a))
    cov = (evecs * cov_diag) @ evecs.T
    return mean, (cov + cov.T) / 2


def lpsvi_plan(
    stats: StepStatistics,
    mdp: LinearMDP,
    params: LmcParams,
    rng,
    warm_state: Optional[np.ndarray] = None,
) -> tuple[Policy, np.ndarray]:
    """Delayed-LPSVI planning: ``params.chains`` LMC chains per step.

    Chains start from ``warm_state[r, h, m]`` (previous episode's samples)
    when warm starting is enabled and a state is given, otherwise from zero.
    Returns the policy and the weights to warm start the next episode.
    """
    R, H, d = stats.num_replicates, stats.horizon, stats.dim
    S, A = mdp.num_states, mdp.num_actions
    M, N = params.chains, params.iterations
    eps = np.stack([g.standard_normal((M, H, N, d)) for g in _as_rngs(rng, R)])
    eps = eps.transpose(0, 2, 3, 4, 1)  # (R, H, N, d, M)

    gram = stats.gram()
    if params.step_size is None:
        eta = params.c_eta / np.linalg.eigvalsh(gram)[..., -1]
    else:
        eta = np.full((R, H), params.step_size)
    contraction = np.eye(d) - 2 * eta[..., None, None] * gram
    noise_scale = np.sqrt(2 * eta * params.temperature)
    if params.warm_start and warm_state is not None:
        w_start = np.swapaxes(warm_state, -1, -2)  # (R, H, d, M)
    else:
        w_start = np.zeros((R, H, d, M))
    feats = mdp.features.reshape(S * A, d)

    def step(h, b):
        noise = noise_scale[:, h, None, None, None] * eps[:, h]
        w = langevin_iterate(contraction[:, h], 2 * eta[:, h, None] * b, w_start[:, h], noise)
        return _ensemble_q(feats, w, S, A), np.swapaxes(w, 1, 2)

    q, weights, caps = _backward_pass(stats, mdp, step)
    return Policy(q, weights, caps), weights


def ucbvi_plan(stats: StepStatistics, mdp: LinearMDP, beta) -> Policy:
    """Delayed-UCBVI: ridge estimate plus ``beta_h * ||phi||_{Omega^-1}``.

    ``beta`` is a scalar or one coefficient per step. Deterministic.
    """
    R, H, d = stats.num_replicates, stats.horizon, stats.dim
    S, A = mdp.num_states, mdp.num_actions
    beta = np.broadcast_to(np.asarray(beta, dtype=float), (H,)).copy()
    if beta.min() < 0:
        raise ValueError("beta must be nonnegative")
    lower = batched_cholesky(stats.gram())
    upper = np.swapaxes(lower, -1, -2)
    feats = mdp.features.reshape(S * A, d)
    # ||phi||_{Omega^-1} = ||L^-1 phi||
    whitened = np.linalg.solve(lower, np.broadcast_to(feats.T, (R, H, d, S * A)))
    bonus = beta[None, :, None] * np.linalg.norm(whitened, axis=-2)
    bonus = bonus.reshape(R, H, S, A)

    def step(h, b):
        y = np.linalg.solve(lower[:, h], b[..., None])
        w = np.linalg.solve(upper[:, h], y)
        return (feats @ w)[..., 0].reshape(R, S, A) + bonus[:, h], np.swapaxes(w, 1, 2)

    q, weights, caps = _backward_pass(stats, mdp, step)
    return Policy(q, weights, caps, bonus=bonus, beta=beta)


def delayed_loss(stats: StepStatistics, h: int, v_next, w, replicate: int = 0) -> float:
    """Ridge loss at step ``h`` summed over the stored arrived transitions."""
    w = np.asarray(w, dtype=float)
    v_next = np.asarray(v_next, dtype=float)
    total = 0.0
    for traj in stats.arrived[replicate]:
        phi = stats.features[traj.states[h], traj.actions[h]]
        y = traj.rewards[h] + v_next[traj.states[h + 1]]
        total += (phi @ w - y) ** 2
    return total / stats.sigma**2 + stats.lam * float(w @ w)


def delayed_loss_gradient(stats: StepStatistics, h: int, v_next, w, replicate: int = 0) -> np.ndarray:
    """``2 (Omega w - b)`` from the aggregated statistics."""
    b = assemble_targets(stats, h, v_next, replicate)
    return 2.0 * (stats.gram()[replicate, h] @ np.asarray(w, dtype=float) - b)
