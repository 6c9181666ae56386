"""Deterministic 64-bit pseudo-random generator for reproducible runs.

The optimizers draw a sample index and then a Bernoulli coin each step, so
trace reproducibility requires a generator whose stream is pinned down by the
seed alone, independent of platform, interpreter, or numpy version.  We use
splitmix64, which is small enough to specify bit-exactly:

    state   <- (state + 0x9E3779B97F4A7C15) mod 2^64
    z       <- state
    z       <- ((z XOR (z >> 30)) * 0xBF58476D1CE4E5B9) mod 2^64
    z       <- ((z XOR (z >> 27)) * 0x94D049BB133111EB) mod 2^64
    output  <- z XOR (z >> 31)

Floats in [0, 1) take the top 53 bits of an output word; integer draws use
rejection sampling on the smallest covering bit mask, so they are exactly
uniform and consume a data-dependent (but seed-deterministic) number of words.
"""

from __future__ import annotations

_MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


class SplitMix64:
    """Seeded splitmix64 stream."""

    __slots__ = ("_state",)

    def __init__(self, seed: int):
        self._state = seed & _MASK64

    def next_uint64(self) -> int:
        self._state = (self._state + _GAMMA) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * _MIX1) & _MASK64
        z = ((z ^ (z >> 27)) * _MIX2) & _MASK64
        return z ^ (z >> 31)

    def random(self) -> float:
        """Uniform double in [0, 1) with 53 random bits."""
        return (self.next_uint64() >> 11) * 2.0**-53

    def randbelow(self, n: int) -> int:
        """Uniform integer in {0, ..., n-1}, unbiased via bit-mask rejection."""
        if n <= 0:
            raise ValueError(f"randbelow requires n >= 1, got {n}")
        if n == 1:
            return 0
        mask = (1 << (n - 1).bit_length()) - 1
        while True:
            r = self.next_uint64() & mask
            if r < n:
                return r

    def bernoulli(self, p: float) -> bool:
        """Coin with success probability p.

        p >= 1 returns True without consuming a word, which keeps the draw
        stream of a probability-1 coin identical to a coinless one.
        """
        if p >= 1.0:
            return True
        return self.random() < p
