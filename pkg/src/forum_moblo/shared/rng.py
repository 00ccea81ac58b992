"""Seeded random number generation.

All randomness in forum_moblo flows through :func:`make_rng`, which wraps
numpy's PCG-64 bit generator (128-bit state, 64-bit output).
"""

import numpy as np

SEED_MASK = (1 << 64) - 1


def make_rng(seed: int) -> np.random.Generator:
    """Return a PCG-64 generator for a 64-bit seed."""
    return np.random.Generator(np.random.PCG64(int(seed) & SEED_MASK))
