"""Deterministic RNG derivation so every pipeline stage is replayable."""

from __future__ import annotations

import hashlib

import numpy as np


def derive_rng(*keys) -> np.random.Generator:
    """Build a Generator whose stream depends only on the given key tuple.

    Keys may be ints, strings, or anything with a stable str(); the same keys
    always yield the same stream, independent of call order elsewhere.
    """
    tag = "/".join(str(k) for k in keys)
    digest = hashlib.sha256(tag.encode("utf-8")).digest()
    return np.random.default_rng(int.from_bytes(digest[:16], "big"))


def spawn(rng: np.random.Generator) -> np.random.Generator:
    """Split off an independent child generator from ``rng``."""
    return np.random.default_rng(rng.integers(0, 2**63 - 1, size=4))
