"""Seed derivation for reproducible Monte Carlo.

Every random stream in the package is keyed by a path of integers hashed
down from a user supplied base seed, so a sample's randomness depends only
on its (base_seed, cell, index) coordinates and never on the schedule.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1

# stream tags for non-index keys; far above any sample index
DIRECTION_STREAM = 0xD1_0000_0000
BOOTSTRAP_STREAM = 0xB0_0000_0000
GOE_STREAM = 0x60_0000_0000


def splitmix64(x: int) -> int:
    """One round of the splitmix64 finalizer (avalanche mix of a 64-bit word)."""
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def derive_seed(base_seed: int, *keys: int) -> int:
    h = splitmix64(int(base_seed) & MASK64)
    for k in keys:
        h = splitmix64(h ^ splitmix64(int(k) & MASK64))
    return h


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(int(seed) & MASK64))
