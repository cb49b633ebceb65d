"""Deterministic RNG derivation.

Every random draw in the package comes from a generator derived from a
key tuple of ints and strings, so a run is fully reproducible from its
seed and loop counters alone. Nothing ever consumes a shared stream, which
makes checkpoint/resume exact: the resumed process re-derives the same
generators from the same counters.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _key_entropy(keys) -> list[int]:
    ints = []
    for k in keys:
        if isinstance(k, str):
            digest = hashlib.sha256(k.encode("utf-8")).digest()
            ints.append(int.from_bytes(digest[:8], "little"))
        elif isinstance(k, (int, np.integer)):
            ints.append(int(k) & 0xFFFFFFFFFFFFFFFF)
        else:
            raise TypeError(f"rng key component must be int or str, got {type(k)!r}")
    return ints


def seed_sequence(*keys) -> np.random.SeedSequence:
    return np.random.SeedSequence(_key_entropy(keys))


def rng_for(*keys) -> np.random.Generator:
    """Fresh Generator deterministically derived from the key tuple."""
    return np.random.default_rng(seed_sequence(*keys))


def derive_seed(*keys) -> int:
    """A 63-bit integer seed derived from the key tuple (for task evaluation)."""
    return int(seed_sequence(*keys).generate_state(1, np.uint64)[0] >> 1)
