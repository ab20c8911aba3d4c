"""Seedable, splittable random streams.

All stochastic code draws from numpy's ``Generator`` over the PCG64 bit
generator, keyed by a ``SeedSequence`` built from integers and strings.  A
stream depends only on its keys, never on how many draws happened elsewhere,
so results do not depend on evaluation order.
"""

from __future__ import annotations

import hashlib
from typing import Union

import numpy as np

Key = Union[int, str]


def _key_to_int(key: Key) -> int:
    if isinstance(key, (bool, np.bool_)):
        return int(key)
    if isinstance(key, (int, np.integer)):
        if key < 0:
            raise ValueError("seed keys must be non-negative")
        return int(key)
    digest = hashlib.sha256(str(key).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def make_rng(*keys: Key) -> np.random.Generator:
    """Generator for the stream identified by ``keys`` (e.g. ``seed, "dropout", step``)."""
    entropy = [_key_to_int(k) for k in keys] or [0]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))


def derive_seed(*keys: Key) -> int:
    """A 63-bit integer seed for the stream identified by ``keys``."""
    return int(make_rng(*keys).integers(0, 2**63 - 1))
