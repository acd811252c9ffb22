"""Deterministic random streams.

Every chain and every level inside a chain draws from its own PCG64 stream,
keyed by ``SeedSequence(seed, spawn_key=(chain, level))``.  The derivation only
depends on integers, so streams are identical across platforms and thread
counts.
"""

import numpy as np


def stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=tuple(key))))


def level_streams(seed: int, chain: int, n_levels: int) -> list:
    return [stream(seed, chain, level) for level in range(n_levels)]
