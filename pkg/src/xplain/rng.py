"""Seeded, portable random streams.

Everything stochastic in the package draws from a PCG64 generator derived
from a user seed plus a tuple of stream keys (strings or integers), e.g.
``substream(seed, "augment", epoch, image_index)``. The derivation goes
through ``numpy.random.SeedSequence`` so the streams are independent,
reproducible across platforms, and insensitive to draw order elsewhere.
"""

from __future__ import annotations

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def _key_to_int(key) -> int:
    if isinstance(key, (int, np.integer)):
        return int(key) & _MASK64
    if isinstance(key, str):
        digest = hashlib.sha256(key.encode("utf-8")).digest()
        return int.from_bytes(digest[:8], "little")
    raise TypeError(f"stream key must be int or str, got {type(key).__name__}")


def substream(seed: int, *keys) -> np.random.Generator:
    """Return a generator for the (seed, *keys) stream."""
    entropy = [_key_to_int(seed)] + [_key_to_int(k) for k in keys]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))
