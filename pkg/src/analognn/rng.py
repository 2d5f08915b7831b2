"""Deterministic splittable random streams on the Philox counter generator.

A stream is addressed by (seed, path). Equal addresses replay the identical
draw sequence regardless of process, thread, or platform; distinct paths are
statistically independent. Draw order within a stream matters: each call
advances the counter.
"""

from __future__ import annotations

import numpy as np

__all__ = ["RngStream"]


class RngStream:
    """Stateful random stream with cheap independent substreams.

    `child(k)` derives the substream at `path + (k,)`. Children are as
    independent of the parent and of each other as the underlying
    SeedSequence spawn mechanism guarantees, and are reproducible: building
    the same child twice yields the same sequence.
    """

    __slots__ = ("seed", "path", "_gen")

    def __init__(self, seed: int, path: int | tuple[int, ...] = ()):
        if isinstance(path, (int, np.integer)):
            path = (int(path),)
        self.seed = int(seed)
        self.path = tuple(int(p) for p in path)
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=self.path)
        self._gen = np.random.Generator(np.random.Philox(ss))

    def child(self, index: int) -> "RngStream":
        return RngStream(self.seed, self.path + (int(index),))

    def uniform(self, size=None) -> np.ndarray | float:
        """Uniform draws in [0, 1)."""
        return self._gen.random(size)

    def normal(self, loc: float = 0.0, scale: float = 1.0, size=None):
        return self._gen.normal(loc, scale, size)

    def integers(self, low: int, high: int, size=None):
        """Uniform integers in [low, high)."""
        return self._gen.integers(low, high, size)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, path={self.path})"
