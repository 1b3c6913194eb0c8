"""Seed derivation helpers.

All randomness in the package flows through numpy Generators built from
SeedSequence objects keyed by (seed, *tags).  Distinct tag tuples give
statistically independent streams, and the derivation is a pure function
of its arguments, so every consumer is reproducible bit for bit.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1


def seed_sequence(seed: int, *key: int) -> np.random.SeedSequence:
    """SeedSequence for stream `key` under master `seed` (any 64-bit int)."""
    return np.random.SeedSequence(entropy=int(seed) & _MASK64, spawn_key=tuple(key))


def generator(seed: int, *key: int) -> np.random.Generator:
    """Fresh PCG64 generator for stream `key` under master `seed`."""
    return np.random.Generator(np.random.PCG64(seed_sequence(seed, *key)))


def derived_seed(seed: int, *key: int) -> int:
    """Collapse a stream key to a plain integer seed."""
    return int(seed_sequence(seed, *key).generate_state(1, np.uint64)[0])
