"""Seed derivation shared by every stochastic stage."""

import numpy as np


def derive_seed(base_seed: int, *tags: int) -> int:
    """Child seed from a base seed and integer tags (stable across runs)."""
    ss = np.random.SeedSequence([int(base_seed) & (2**64 - 1), *tags])
    return int(ss.generate_state(1, dtype=np.uint64)[0])
