"""Seeded random streams.

All randomness uses numpy's counter-based Philox bit generator.  Child streams
are derived from one 64-bit root seed by appending integer keys to the
``SeedSequence`` spawn key, so ``child(seed, 1, 3)`` is the same stream on every
run and independent of ``child(seed, 1, 4)``.
"""

from __future__ import annotations

import numpy as np


def seed_sequence(seed, *keys: int) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        base = seed
        return np.random.SeedSequence(
            entropy=base.entropy, spawn_key=tuple(base.spawn_key) + tuple(keys)
        )
    if isinstance(seed, (bool, np.bool_)) or not isinstance(seed, (int, np.integer)):
        raise TypeError(f"seed must be an int, got {type(seed).__name__}")
    if seed < 0 or seed >= 2**64:
        raise ValueError("seed must be a 64-bit unsigned integer")
    return np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in keys))


def make_rng(seed, *keys: int) -> np.random.Generator:
    """Return a Philox-backed generator for ``seed`` and optional child keys."""
    return np.random.Generator(np.random.Philox(seed_sequence(seed, *keys)))


def child_int_seed(seed, *keys: int) -> int:
    """A 32-bit integer seed for libraries that only accept ints (sklearn)."""
    return int(seed_sequence(seed, *keys).generate_state(1, dtype=np.uint32)[0])
