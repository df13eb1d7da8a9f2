"""Seedable random source shared by every stochastic module.

All randomness flows through Philox, a counter-based generator, so that a run
is bitwise reproducible from its recorded seed on any platform.  Sub-seeds for
pipeline stages are derived from the run seed by hashing, never by drawing.
"""

import hashlib

import numpy as np

MAX_SEED = 2**64 - 1


def generator(seed: int) -> np.random.Generator:
    """Counter-based generator for a 64-bit unsigned seed."""
    if not (0 <= seed <= MAX_SEED):
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return np.random.Generator(np.random.Philox(key=seed))


def derive_seed(seed: int, label: str) -> int:
    """Fixed derivation of a per-purpose sub-seed from a run seed.

    Hash-based so that stages stay independent: drawing more samples in one
    stage never shifts the stream of another.
    """
    digest = hashlib.sha256(f"{seed}/{label}".encode()).digest()
    return int.from_bytes(digest[:8], "little")
