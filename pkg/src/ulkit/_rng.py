"""Seeded random streams.

Every random decision in the toolkit flows from a single integer seed
through named substreams, so that adding a consumer of randomness in one
place never perturbs draws made elsewhere.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _stream_key(name: str) -> int:
    # Python's builtin hash() is salted per process; sha256 is stable.
    digest = hashlib.sha256(name.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def substream(seed: int, name: str) -> np.random.Generator:
    """Return a generator for the named substream of ``seed``."""
    return np.random.default_rng(np.random.SeedSequence([seed, _stream_key(name)]))
