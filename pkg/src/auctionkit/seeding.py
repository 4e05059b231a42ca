"""Deterministic seed derivation.

All randomness in the package flows from a single master seed through
derive_seed, a splitmix64-style integer mix over the master seed and a
tuple of stream indices (rep number, trader index, generation, ...).
Equal inputs give equal streams on every platform; nearby inputs give
statistically unrelated streams.
"""

from __future__ import annotations

import random

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def _splitmix64(x: int) -> int:
    x = (x + _GOLDEN) & _MASK
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def derive_seed(master: int, *indices: int) -> int:
    """Mix a master seed with stream indices into a fresh 64-bit seed."""
    x = _splitmix64(master & _MASK)
    for idx in indices:
        x = _splitmix64((x ^ (idx & _MASK)) & _MASK)
    return x


def make_rng(master: int, *indices: int) -> random.Random:
    """Stdlib RNG on a derived stream."""
    return random.Random(derive_seed(master, *indices))
