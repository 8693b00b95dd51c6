"""Named, seeded random substreams.

A stream is identified by ``(master seed, name, episode)``. Each triple maps to
its own ``SeedSequence``, so adding a new consumer never shifts the draws of
an existing one.
"""

from __future__ import annotations

import zlib

import numpy as np

ENV = "env"
DELAY = "delay"
AGENT = "agent"
ALPHA = "alpha"


def stream_key(name: str) -> int:
    return zlib.crc32(name.encode("utf-8"))


def substream(seed: int, name: str, episode: int = 0) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(stream_key(name), int(episode)))
    return np.random.default_rng(ss)
