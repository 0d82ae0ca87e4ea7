"""Seeded random streams.

All randomness flows from a single integer seed that is expanded into named
streams with :class:`numpy.random.SeedSequence`, so that the same
``(seed, stream)`` pair always reproduces the same sequence.
"""

from __future__ import annotations

import zlib

import numpy as np


def _stream_key(stream) -> int:
    if isinstance(stream, (int, np.integer)):
        return int(stream)
    return zlib.crc32(str(stream).encode("utf-8"))


class RngState:
    """A seeded generator bound to a stream id."""

    __slots__ = ("seed", "stream", "gen")

    def __init__(self, seed: int = 0, stream=0):
        self.seed = int(seed)
        self.stream = stream
        ss = np.random.SeedSequence(self.seed, spawn_key=(_stream_key(stream),))
        self.gen = np.random.Generator(np.random.PCG64(ss))

    def __repr__(self):
        return f"RngState(seed={self.seed}, stream={self.stream!r})"

    def random(self) -> float:
        return float(self.gen.random())

    def integers(self, low, high=None) -> int:
        return int(self.gen.integers(low, high))

    def poisson(self, lam: float) -> int:
        return int(self.gen.poisson(lam))

    def permutation(self, n: int) -> list[int]:
        return [int(x) for x in self.gen.permutation(n)]

    def spawn(self, stream) -> "RngState":
        """Derived stream; deterministic in (seed, parent stream, stream)."""
        return RngState(self.seed, f"{self.stream}/{stream}")


def make_rng(seed: int = 0, stream=0) -> RngState:
    return RngState(seed, stream)
