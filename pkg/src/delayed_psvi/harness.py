"""Experiment configuration, the episode loop, regret accounting and CSV output."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from . import rng as streams
from .agents import LmcParams, StepStatistics, lpsvi_plan, psvi_plan, ucbvi_plan
from .delay import DelayDistribution, DelayedFeedbackBuffer, sample_delay
from .environment import (
    FEATURE,
    LinearMDP,
    build_riverswim_mdp,
    build_synthetic_mdp,
    draw_alpha,
    evaluate_actions,
    exact_optimal_values,
    rollout_batch,
)
from .errors import ConfigError, InvalidDelta

CSV_HEADER = ("seed", "episode", "return", "policy_value", "regret", "cum_regret", "delay", "arrivals")


@dataclass(frozen=True)
class EnvConfig:
    name: str = "synthetic"
    num_actions: int = 20
    r: float = 0.99
    alpha_seed: int = 0
    alpha_bits: Optional[tuple[int, ...]] = None
    reward_mode: str = FEATURE

    def __post_init__(self):
        if self.name not in ("synthetic", "riverswim"):
            raise ConfigError(f"unknown env {self.name!r}")


@dataclass(frozen=True)
class AgentConfig:
    """Planner hyperparameters. ``None`` fields take the env-specific defaults
    (see :func:`agent_defaults`)."""

    name: str = "psvi"
    # psvi
    nu: Optional[float] = None
    sigma: Optional[float] = None
    M: int = 2
    # lpsvi
    c_eta: float = 0.5
    N: int = 40
    gamma: Optional[float] = None
    warm_start: bool = True
    # ucbvi
    c_beta: Optional[float] = None
    beta_rule: Optional[str] = None
    beta: Optional[float] = None

    def __post_init__(self):
        if self.name not in ("psvi", "lpsvi", "ucbvi"):
            raise ConfigError(f"unknown agent {self.name!r}")
        if self.beta_rule not in (None, "synthetic", "riverswim", "constant"):
            raise ConfigError(f"unknown beta_rule {self.beta_rule!r}")
        if self.M < 1 or self.N < 0:
            raise ConfigError("need M >= 1 and N >= 0")


@dataclass(frozen=True)
class ExperimentConfig:
    env: EnvConfig = field(default_factory=EnvConfig)
    agent: AgentConfig = field(default_factory=AgentConfig)
    delay: DelayDistribution = field(default_factory=lambda: DelayDistribution.poisson(50))
    episodes: int = 5000
    horizon: int = 20
    seeds: tuple[int, ...] = (0,)
    lam: float = 1.0
    output: Optional[str] = None

    def __post_init__(self):
        if self.episodes < 1 or self.horizon < 1:
            raise ConfigError("episodes and horizon must be at least 1")
        if not self.lam > 0:
            raise ConfigError("lam must be positive")
        if len(self.seeds) == 0 or any(s < 0 for s in self.seeds):
            raise ConfigError("need at least one nonnegative seed")

    def to_dict(self) -> dict:
        out = asdict(self)
        out["delay"] = self.delay.to_dict()
        out["seeds"] = list(self.seeds)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        data = dict(data)
        known = {"env", "agent", "delay", "episodes", "horizon", "seeds", "lam", "output"}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        try:
            env = dict(data.pop("env", {}))
            if env.get("alpha_bits") is not None:
                env["alpha_bits"] = tuple(int(b) for b in env["alpha_bits"])
            kwargs = dict(data)
            kwargs["env"] = EnvConfig(**env)
            kwargs["agent"] = AgentConfig(**data.get("agent", {}))
            if "delay" in data:
                kwargs["delay"] = DelayDistribution.from_dict(data["delay"])
            if "seeds" in data:
                kwargs["seeds"] = tuple(int(s) for s in data["seeds"])
            return cls(**kwargs)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass(frozen=True, slots=True)
class MetricsRow:
    seed: int
    episode: int
    ret: float
    policy_value: float
    regret: float
    cum_regret: float
    delay: int
    arrivals: int


def agent_defaults(agent: AgentConfig, env_name: str, dim: int, horizon: int, M: int) -> AgentConfig:
    """Fill unset hyperparameters with the per-environment experiment values."""
    if env_name == "synthetic":
        defaults = dict(nu=math.sqrt(dim) * horizon, sigma=0.1, gamma=0.02, c_beta=0.1, beta_rule="synthetic")
    else:
        defaults = dict(nu=1.0, sigma=1.13, gamma=0.005**2 * dim * M * horizon**2, c_beta=0.04, beta_rule="riverswim")
    if agent.beta is not None:
        defaults["beta_rule"] = "constant"
    return replace(agent, **{k: v for k, v in defaults.items() if getattr(agent, k) is None})


def ucbvi_beta(agent: AgentConfig, dim: int, horizon: int, episode: int) -> np.ndarray:
    """Per-step bonus coefficients for episode ``episode`` (1-based)."""
    if agent.beta_rule == "constant":
        return np.full(horizon, float(agent.beta))
    if agent.beta_rule == "synthetic":
        dh = dim * horizon
        return np.full(horizon, agent.c_beta / 2 * dh * math.sqrt(math.log(dh)))
    # riverswim: c/2 * d * sqrt(k) * (H - h) with 1-based h
    return agent.c_beta / 2 * dim * math.sqrt(episode) * (horizon - 1 - np.arange(horizon, dtype=float))


def build_env(config: ExperimentConfig) -> LinearMDP:
    env = config.env
    if env.name == "riverswim":
        return build_riverswim_mdp(config.horizon)
    if env.alpha_bits is not None:
        alpha = np.asarray(env.alpha_bits)
    else:
        alpha = draw_alpha(config.horizon, streams.substream(env.alpha_seed, streams.ALPHA))
    return build_synthetic_mdp(env.num_actions, config.horizon, env.r, alpha, env.reward_mode)


class Planner:
    """Binds an agent config to its statistics store and planning routine."""

    def __init__(self, agent: AgentConfig, mdp: LinearMDP, lam: float, num_replicates: int):
        self.agent = agent
        self.mdp = mdp
        sigma = agent.sigma if agent.name == "psvi" else 1.0
        self.stats = StepStatistics.for_mdp(mdp, lam, sigma, num_replicates)
        self.warm = None
        if agent.name == "lpsvi":
            self.lmc = LmcParams(iterations=agent.N, temperature=agent.gamma, chains=agent.M,
                                 warm_start=agent.warm_start, c_eta=agent.c_eta)

    def plan(self, episode: int, rngs):
        agent = self.agent
        if agent.name == "psvi":
            return psvi_plan(self.stats, self.mdp, agent.nu, agent.M, rngs)
        if agent.name == "lpsvi":
            policy, self.warm = lpsvi_plan(self.stats, self.mdp, self.lmc, rngs, self.warm)
            return policy
        beta = ucbvi_beta(agent, self.mdp.dim, self.mdp.horizon, episode)
        return ucbvi_plan(self.stats, self.mdp, beta)


Observer = Callable[[int, StepStatistics, object], None]


def run_batch(config: ExperimentConfig, seeds: Sequence[int], observer: Optional[Observer] = None) -> list[MetricsRow]:
    """Run the given seeds side by side as replicates of one configuration.

    ``observer(k, stats, policy)`` is called after planning each episode.
    """
    mdp = build_env(config)
    v_star = float(exact_optimal_values(mdp).v[0, mdp.initial_state])
    R = len(seeds)
    agent = agent_defaults(config.agent, config.env.name, mdp.dim, mdp.horizon, config.agent.M)
    planner = Planner(agent, mdp, config.lam, R)
    buffers = [DelayedFeedbackBuffer() for _ in seeds]
    cum = np.zeros(R)
    rows: list[list[MetricsRow]] = [[] for _ in seeds]

    for k in range(1, config.episodes + 1):
        arrivals = []
        for i, buf in enumerate(buffers):
            released = buf.release(k)
            planner.stats.ingest(released, i)
            arrivals.append(len(released))
        policy = planner.plan(k, [streams.substream(s, streams.AGENT, k) for s in seeds])
        if observer is not None:
            observer(k, planner.stats, policy)
        actions = policy.action_table()
        trajs = rollout_batch(mdp, actions, [streams.substream(s, streams.ENV, k) for s in seeds], k)
        values = evaluate_actions(mdp, actions)
        regret = v_star - values
        cum += regret
        for i, (seed, traj) in enumerate(zip(seeds, trajs)):
            delay = sample_delay(config.delay, streams.substream(seed, streams.DELAY, k))
            buffers[i].push(traj, delay)
            planner.stats.ingest_shadow([traj], i)
            rows[i].append(MetricsRow(seed, k, traj.total_return, float(values[i]),
                                      float(regret[i]), float(cum[i]), delay, arrivals[i]))
    return [row for per_seed in rows for row in per_seed]


def run_experiment(config: ExperimentConfig, observer: Optional[Observer] = None) -> list[MetricsRow]:
    """All seeds of ``config``; rows ordered by (seed, episode)."""
    rows = run_batch(config, config.seeds, observer)
    return sorted(rows, key=lambda row: (row.seed, row.episode))


def optimal_value(config: ExperimentConfig) -> float:
    mdp = build_env(config)
    return float(exact_optimal_values(mdp).v[0, mdp.initial_state])


def converged_return(rows: Sequence[MetricsRow], fraction: float = 0.1) -> float:
    """Mean realized return over the final ``fraction`` of episodes, pooled over seeds."""
    K = max(row.episode for row in rows)
    start = K - max(1, int(round(fraction * K)))
    tail = [row.ret for row in rows if row.episode > start]
    return float(np.mean(tail))


def cumulative_regret_at(rows: Sequence[MetricsRow], episode: int) -> float:
    """Seed-averaged cumulative regret after ``episode``."""
    return float(np.mean([row.cum_regret for row in rows if row.episode == episode]))


@dataclass(frozen=True)
class TheoreticalParams:
    M_theory: int
    note: str


def theoretical_params(delta: float, H: int, K: int, d: int = 10) -> TheoreticalParams:
    """Ensemble size ``ceil(log(4HK/delta) / log(64/63))`` from the regret analysis."""
    if not 0 < delta < 1:
        raise InvalidDelta(f"delta={delta} must lie in (0, 1)")
    M = math.ceil(math.log(4 * H * K / delta) / math.log(64 / 63))
    note = (
        f"nu = C_(delta/4) depends on unspecified absolute constants and is not computed; "
        f"experiments use the practical M=2, nu=sqrt(d)*H={math.sqrt(d) * H:g}."
    )
    return TheoreticalParams(M, note)


def _fmt(x: float) -> str:
    return f"{x:#.6g}"


def _write_rows(rows: Sequence[MetricsRow], fh) -> None:
    fh.write(",".join(CSV_HEADER) + "\n")
    for r in sorted(rows, key=lambda row: (row.seed, row.episode)):
        fields = (str(r.seed), str(r.episode), _fmt(r.ret), _fmt(r.policy_value), _fmt(r.regret),
                  _fmt(r.cum_regret), str(r.delay), str(r.arrivals))
        fh.write(",".join(fields) + "\n")


def write_metrics(rows: Sequence[MetricsRow], path) -> None:
    """Write rows sorted by (seed, episode); ``path`` may also be an open text stream."""
    if hasattr(path, "write"):
        _write_rows(rows, path)
        return
    with open(path, "w", newline="") as fh:
        _write_rows(rows, fh)


def read_metrics(path) -> list[MetricsRow]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != CSV_HEADER:
            raise ValueError(f"unexpected header {header}")
        return [
            MetricsRow(int(s), int(k), float(ret), float(v), float(reg), float(cum), int(tau), int(arr))
            for s, k, ret, v, reg, cum, tau, arr in reader
        ]


def save_config(config: ExperimentConfig, path) -> None:
    Path(path).write_text(json.dumps(config.to_dict(), indent=2) + "\n")
