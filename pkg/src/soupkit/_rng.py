"""FNV-1a hashing and the SplitMix64 generator.

Both are fixed, portable algorithms so that signatures, feature indices and
training runs are reproducible bit-for-bit across platforms.
"""
from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3

_GAMMA = 0x9E3779B97F4A7C15


def fnv1a64(data: bytes, seed: int = 0) -> int:
    """64-bit FNV-1a. A nonzero ``seed`` is XORed into the offset basis."""
    h = FNV_OFFSET ^ (seed & MASK64)
    for byte in data:
        h ^= byte
        h = (h * FNV_PRIME) & MASK64
    return h


def _mix(z):
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


class SplitMix64:
    """SplitMix64 stream.

    Output ``i`` (0-based) is ``mix(seed + (i + 1) * gamma)``, so blocks of
    outputs can be produced with vectorized numpy arithmetic and still agree
    exactly with one-at-a-time generation.
    """

    def __init__(self, seed: int):
        self.state = seed & MASK64

    def next_u64(self) -> int:
        self.state = (self.state + _GAMMA) & MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        return z ^ (z >> 31)

    def next_u64_array(self, n: int) -> np.ndarray:
        steps = np.arange(1, n + 1, dtype=np.uint64)
        with np.errstate(over="ignore"):
            states = np.uint64(self.state) + steps * np.uint64(_GAMMA)
            out = _mix(states)
        self.state = (self.state + n * _GAMMA) & MASK64
        return out

    def uniform(self, n: int, low: float = 0.0, high: float = 1.0) -> np.ndarray:
        """``n`` floats in ``[low, high)`` from the top 53 bits of each output."""
        bits = self.next_u64_array(n) >> np.uint64(11)
        return low + (high - low) * (bits.astype(np.float64) * 2.0**-53)

    def below(self, bound: int) -> int:
        # Modulo reduction; bias is < bound / 2**64 and irrelevant here.
        return self.next_u64() % bound

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle."""
        for i in range(len(items) - 1, 0, -1):
            j = self.below(i + 1)
            items[i], items[j] = items[j], items[i]
