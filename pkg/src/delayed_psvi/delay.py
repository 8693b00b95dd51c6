"""Episodic delay distributions and the feedback buffer.

Feedback of episode ``j`` with delay ``tau_j`` is usable when planning
episode ``k`` iff ``j + tau_j <= k - 1``, i.e. from episode ``j + tau_j + 1``.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .environment import Trajectory
from .errors import ConfigError, NonMonotoneEpisode

KINDS = ("constant", "multinomial", "poisson", "pareto")


@dataclass(frozen=True)
class DelayDistribution:
    kind: str
    value: int = 0
    values: tuple[int, ...] = ()
    probs: tuple[float, ...] = ()
    mean: float = 0.0
    shape: float = 0.0
    scale: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown delay kind {self.kind!r}; expected one of {KINDS}")
        if self.kind == "constant" and (self.value < 0 or int(self.value) != self.value):
            raise ConfigError("constant delay must be a nonnegative integer")
        if self.kind == "multinomial":
            if len(self.values) == 0 or len(self.values) != len(self.probs):
                raise ConfigError("multinomial needs matching values and probs")
            if any(v < 0 or int(v) != v for v in self.values):
                raise ConfigError("multinomial values must be nonnegative integers")
            if any(p < 0 for p in self.probs) or abs(sum(self.probs) - 1.0) > 1e-12:
                raise ConfigError("multinomial probs must be nonnegative and sum to 1")
        if self.kind == "poisson" and not self.mean > 0:
            raise ConfigError("poisson mean must be positive")
        if self.kind == "pareto" and not (self.shape > 0 and self.scale > 0):
            raise ConfigError("pareto shape and scale must be positive")

    @classmethod
    def constant(cls, value: int) -> "DelayDistribution":
        return cls("constant", value=int(value))

    @classmethod
    def multinomial(cls, values, probs) -> "DelayDistribution":
        return cls("multinomial", values=tuple(int(v) for v in values), probs=tuple(float(p) for p in probs))

    @classmethod
    def poisson(cls, mean: float) -> "DelayDistribution":
        return cls("poisson", mean=float(mean))

    @classmethod
    def pareto(cls, shape: float, scale: float) -> "DelayDistribution":
        return cls("pareto", shape=float(shape), scale=float(scale))

    def to_dict(self) -> dict:
        if self.kind == "constant":
            return {"kind": "constant", "value": self.value}
        if self.kind == "multinomial":
            return {"kind": "multinomial", "values": list(self.values), "probs": list(self.probs)}
        if self.kind == "poisson":
            return {"kind": "poisson", "mean": self.mean}
        return {"kind": "pareto", "shape": self.shape, "scale": self.scale}

    @classmethod
    def from_dict(cls, data: dict) -> "DelayDistribution":
        data = dict(data)
        kind = data.pop("kind", None)
        try:
            if kind == "constant":
                return cls.constant(data["value"])
            if kind == "multinomial":
                return cls.multinomial(data["values"], data["probs"])
            if kind == "poisson":
                return cls.poisson(data["mean"])
            if kind == "pareto":
                return cls.pareto(data["shape"], data["scale"])
        except KeyError as exc:
            raise ConfigError(f"delay {kind!r} is missing parameter {exc}") from None
        raise ConfigError(f"unknown delay kind {kind!r}")

    @classmethod
    def parse(cls, text: str) -> "DelayDistribution":
        """Parse the CLI form: ``constant:0``, ``poisson:50``, ``pareto:1.0:500``,
        ``multinomial:10,20,30:0.5,0.3,0.2``."""
        kind, _, rest = text.partition(":")
        parts = rest.split(":") if rest else []
        try:
            if kind == "constant" and len(parts) == 1:
                return cls.constant(int(parts[0]))
            if kind == "poisson" and len(parts) == 1:
                return cls.poisson(float(parts[0]))
            if kind == "pareto" and len(parts) == 2:
                return cls.pareto(float(parts[0]), float(parts[1]))
            if kind == "multinomial" and len(parts) == 2:
                return cls.multinomial(parts[0].split(","), [float(p) for p in parts[1].split(",")])
        except ValueError as exc:
            raise ConfigError(f"cannot parse delay {text!r}: {exc}") from None
        raise ConfigError(f"cannot parse delay {text!r}")


def sample_delay(dist: DelayDistribution, rng: np.random.Generator) -> int:
    if dist.kind == "constant":
        return dist.value
    if dist.kind == "multinomial":
        return int(dist.values[rng.choice(len(dist.values), p=dist.probs)])
    if dist.kind == "poisson":
        return int(rng.poisson(dist.mean))
    # Lomax (Pareto II) floored to an integer; support starts at 0.
    u = 1.0 - rng.random()  # (0, 1]
    return int(math.floor(dist.scale * (u ** (-1.0 / dist.shape) - 1.0)))


@dataclass
class DelayedFeedbackBuffer:
    """Trajectories waiting for their delay to elapse.

    ``release_arrivals(k)`` hands out, exactly once, every trajectory whose
    ``available_from <= k``.
    """

    _pending: list = field(default_factory=list)
    arrived: list[Trajectory] = field(default_factory=list)
    last_episode: Optional[int] = None

    def __len__(self) -> int:
        return len(self._pending)

    def push(self, traj: Trajectory, delay: int) -> int:
        if delay < 0:
            raise ValueError("delay must be nonnegative")
        available_from = traj.origin_episode + int(delay) + 1
        heapq.heappush(self._pending, (available_from, traj.origin_episode, id(traj), traj))
        return available_from

    def release(self, k: int) -> list[Trajectory]:
        if self.last_episode is not None and k < self.last_episode:
            raise NonMonotoneEpisode(f"planning episode went from {self.last_episode} back to {k}")
        self.last_episode = k
        out = []
        while self._pending and self._pending[0][0] <= k:
            out.append(heapq.heappop(self._pending))
        out.sort(key=lambda item: item[1])
        released = [item[3] for item in out]
        self.arrived.extend(released)
        return released


def push_trajectory(buffer: DelayedFeedbackBuffer, traj: Trajectory, delay: int) -> int:
    return buffer.push(traj, delay)


def release_arrivals(buffer: DelayedFeedbackBuffer, k: int) -> list[Trajectory]:
    return buffer.release(k)
