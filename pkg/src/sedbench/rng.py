"""Seed derivation.

Every random draw in the toolkit comes from a ``numpy.random.Generator``
backed by PCG64, seeded by ``SeedSequence(master_seed, spawn_key=key)``.
The key is a tuple of non-negative integers; string components are mapped
through CRC-32 so stream names are stable across platforms and Python
versions (unlike ``hash``). Two draws share a stream only if they share the
whole key, so clip ``i`` of suite ``s`` never depends on how many clips are
generated or in which order.
"""

from __future__ import annotations

import zlib

import numpy as np

MAX_SEED = 2**64 - 1


def _key_part(part) -> int:
    if isinstance(part, str):
        return zlib.crc32(part.encode("utf-8"))
    if isinstance(part, (int, np.integer)) and part >= 0:
        return int(part)
    raise TypeError(f"seed key parts must be str or non-negative int, got {part!r}")


def derive_seed(master_seed: int, *key) -> int:
    """A 64-bit child seed for ``key``, e.g. ``derive_seed(seed, "ref", 3)``."""
    ss = np.random.SeedSequence(int(master_seed), spawn_key=tuple(_key_part(k) for k in key))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def make_rng(seed: int, *key) -> np.random.Generator:
    if not 0 <= int(seed) <= MAX_SEED:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(_key_part(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))
