"""Seeded random streams, one independent stream per named purpose."""

import zlib

import numpy as np


def stream(seed: int, purpose: str, *extra: int) -> np.random.Generator:
    """Generator keyed by (seed, purpose, *extra).

    Streams for different purposes never overlap, so adding a consumer of
    randomness in one place does not shift the draws made elsewhere.
    """
    key = (zlib.crc32(purpose.encode("utf-8")),) + tuple(int(e) for e in extra)
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=key))
