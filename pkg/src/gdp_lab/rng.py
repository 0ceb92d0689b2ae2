"""Reproducible, splittable random streams.

Every stream is a Philox counter-based generator keyed by ``(seed, stream_id)``
through :class:`numpy.random.SeedSequence`, so output is bit-identical across
platforms and distinct stream ids are independent.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class RngStream:
    seed: int
    stream_id: int = 0
    path: tuple = ()

    def __post_init__(self):
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if int(self.stream_id) < 0:
            raise ValueError("stream_id must be nonnegative")

    def generator(self) -> np.random.Generator:
        key = (int(self.stream_id),) + tuple(int(p) for p in self.path)
        ss = np.random.SeedSequence(int(self.seed), spawn_key=key)
        return np.random.Generator(np.random.Philox(ss))

    def substream(self, index: int) -> "RngStream":
        """Independent child stream (spawn keys are never shared with the parent)."""
        if int(index) < 0:
            raise ValueError("substream index must be nonnegative")
        return RngStream(self.seed, self.stream_id, self.path + (int(index),))


def as_generator(rng) -> np.random.Generator:
    """Accept an RngStream, a Generator, or an integer seed."""
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, RngStream):
        return rng.generator()
    if rng is None:
        raise TypeError("an explicit rng is required")
    return RngStream(int(rng)).generator()
