"""Deterministic seed derivation and buffered categorical sampling.

Every stochastic object in the package is driven by a numpy Generator whose
seed is derived with :func:`mix64`, a fixed splitmix64-style mixer.  Trials
never share streams: trial t of an experiment uses mix64(master_seed, t),
and column i of a lazily grown map uses mix64(map_seed, zigzag(i)).
"""
from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def _finalize(x: int) -> int:
    # splitmix64 output function
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9 & _MASK
    x = (x ^ (x >> 27)) * 0x94D049BB133111EB & _MASK
    return x ^ (x >> 31)


def mix64(*parts: int) -> int:
    """Mix integers into one 64-bit seed. Fixed for bit-exact reproducibility."""
    x = 0
    for p in parts:
        x = (x + _GOLDEN + (int(p) & _MASK)) & _MASK
        x = _finalize(x)
    return x


def mix2(a: int, b: int) -> int:
    """One-round mixer (splitmix64 step) for hot per-vertex derivations."""
    return _finalize((a + _GOLDEN + b) & _MASK)


_INV_TWO64 = 1.0 / float(1 << 64)


def unit01(x: int) -> float:
    return x * _INV_TWO64


def zigzag(i: int) -> int:
    """Map a signed index to a nonnegative one (0,-1,1,-2,... -> 0,1,2,3,...)."""
    return 2 * i if i >= 0 else -2 * i - 1


def make_rng(*seed_parts: int) -> np.random.Generator:
    return np.random.default_rng(mix64(*seed_parts))


class BufferedDraws:
    """Uniform [0,1) draws from a Generator, pulled in blocks.

    Cuts per-call Generator overhead in hot sampling loops while keeping the
    stream deterministic (block size is fixed).
    """

    __slots__ = ("rng", "_buf", "_pos", "_size")

    def __init__(self, rng: np.random.Generator, block: int = 4096):
        self.rng = rng
        self._size = block
        self._buf = rng.random(block)
        self._pos = 0

    def next(self) -> float:
        if self._pos >= self._size:
            self._buf = self.rng.random(self._size)
            self._pos = 0
        u = self._buf[self._pos]
        self._pos += 1
        return u

    def integer(self, n: int) -> int:
        """Uniform integer in [0, n)."""
        return int(self.next() * n)
