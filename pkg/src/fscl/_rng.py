"""Seed derivation.

Every random stream is keyed by a 64-bit integer obtained by mixing the base
seed with replicate indices and role tags through the splitmix64 finalizer,
so a replicate's draws do not depend on which worker runs it.
"""

from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1

ROLE_DATA = 0x44415441
ROLE_BOOT = 0x424F4F54
ROLE_PERM = 0x5045524D
ROLE_NULL = 0x4E554C4C


def _splitmix(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK
    return x ^ (x >> 31)


def mix(seed: int, *keys: int) -> int:
    """Fold ``keys`` into ``seed`` one at a time."""
    x = int(seed) & _MASK
    for k in keys:
        x = _splitmix(x ^ _splitmix(int(k) & _MASK))
    return x


def generator(seed) -> np.random.Generator:
    """PCG64 generator from an int seed; generators pass through unchanged."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.PCG64(int(seed) & _MASK))
