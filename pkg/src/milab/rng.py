"""Deterministic seed derivation for multi-stage experiments.

Every random stream in an experiment is a pure function of
``(global_seed, stage_index)``.  Sub-seeds are derived as

    stage_seed = splitmix64(global_seed XOR (stage_index * GOLDEN))

with GOLDEN = 0x9E3779B97F4A7C15 (a large odd constant) and the standard
SplitMix64 finalizer, so the stream structure is reproducible from this
file alone.  Bulk sampling uses numpy's PCG64 generator seeded with the
derived 64-bit value.
"""

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15


def splitmix64(x: int) -> int:
    """Single SplitMix64 step: 64-bit state in, well-mixed 64-bit value out."""
    x = (x + GOLDEN) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return (x ^ (x >> 31)) & MASK64


def derive_seed(seed: int, index: int) -> int:
    """Sub-seed for stage or model `index` of a run seeded with `seed`."""
    return splitmix64((seed ^ ((index * GOLDEN) & MASK64)) & MASK64)


def generator(seed: int) -> np.random.Generator:
    """PCG64 generator for a (derived) 64-bit seed."""
    return np.random.Generator(np.random.PCG64(seed & MASK64))
