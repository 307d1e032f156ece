"""Seed management: named substreams derived from a single root seed.

Every random consumer (triplet sampler, model init, probe repeats, ...)
gets its own independent stream keyed by name, so adding a new consumer
never shifts the draws of an existing one.
"""

from __future__ import annotations

import zlib

import numpy as np


def _key(part: str | int) -> int:
    if isinstance(part, int):
        if part < 0:
            raise ValueError(f"negative stream key: {part}")
        return part
    return zlib.crc32(part.encode("utf-8"))


def substream(root_seed: int, *parts: str | int) -> np.random.SeedSequence:
    """Derive a named child seed sequence from a root seed.

    String parts are hashed with CRC-32; integer parts are used as-is.
    The same (root_seed, parts) always yields the same stream.
    """
    return np.random.SeedSequence(root_seed, spawn_key=tuple(_key(p) for p in parts))


def named_rng(root_seed: int, *parts: str | int) -> np.random.Generator:
    """Generator for the named substream of ``root_seed``."""
    return np.random.default_rng(substream(root_seed, *parts))


def as_generator(seed: int | np.random.Generator | np.random.SeedSequence) -> np.random.Generator:
    """Accept an int seed, a SeedSequence, or an existing Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)
