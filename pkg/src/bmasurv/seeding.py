"""Counter-based seed derivation.

Every stream is keyed by ``(master seed, *path)`` through numpy's
``SeedSequence`` spawn keys, so any (look, model, chain) stream can be
recreated without replaying the ones before it.
"""
from __future__ import annotations

import numpy as np


def derive_seed(seed: int, *keys: int) -> int:
    """64-bit child seed for the integer path ``keys`` under ``seed``."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def rng_for(seed: int, *keys: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.PCG64(ss))
