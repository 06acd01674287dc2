"""Seeded pseudo-random numbers with a fixed cross-platform definition.

All stochastic behaviour in capkit (frame sampling, caption sampling,
parameter init) flows through this generator so that a seed pins the
output bit-for-bit, independent of Python's own `random` state or
numpy's generator versioning.

The generator is splitmix64: state advances by a fixed odd constant and
the output is a finalizer over the new state. Bounded draws use the
multiply-shift mapping (high 64 bits of out * n), which needs no
rejection loop.
"""

from __future__ import annotations

_MASK64 = 0xFFFFFFFFFFFFFFFF
_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


def _finalize(z: int) -> int:
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK64
    return z ^ (z >> 31)


class Splitmix64:
    """Deterministic 64-bit generator; one instance per sampling session."""

    __slots__ = ("_state",)

    def __init__(self, seed: int):
        self._state = seed & _MASK64

    def next_u64(self) -> int:
        """Next raw 64-bit output."""
        self._state = (self._state + _GAMMA) & _MASK64
        return _finalize(self._state)

    def below(self, n: int) -> int:
        """Uniform integer in [0, n). n must be positive."""
        if n <= 0:
            raise ValueError(f"below() needs n >= 1, got {n}")
        return (self.next_u64() * n) >> 64

    def next_float(self) -> float:
        """Uniform float in [0, 1) with 53 random bits."""
        return (self.next_u64() >> 11) * 2.0 ** -53


def derive_seed(seed: int, index: int) -> int:
    """Per-stream child seed: one splitmix64 step from state seed XOR index.

    Used to give each feature extractor (or any indexed substream) an
    independent but reproducible seed.
    """
    return Splitmix64((seed ^ index) & _MASK64).next_u64()
