"""Input validation helpers shared across the toolkit."""

from __future__ import annotations

from typing import Sequence

import numpy as np

#: Tolerance for "rows sum to one" checks on probability matrices.
PROB_SUM_TOL = 1e-9


def check_token_sequence(ids: Sequence[int], vocab_size: int | None = None,
                         name: str = "sequence") -> tuple[int, ...]:
    """Validate a token-id sequence and return it as a tuple.

    Ids must be non-negative integers, and below ``vocab_size`` when given.
    """
    out = tuple(int(i) for i in ids)
    for i in out:
        if i < 0:
            raise ValueError(f"{name}: negative token id {i}")
        if vocab_size is not None and i >= vocab_size:
            raise ValueError(f"{name}: token id {i} out of range (vocab size {vocab_size})")
    return out


def check_prob_matrix(dists, name: str = "dists") -> np.ndarray:
    """Validate a (T, V) matrix of per-step probability distributions."""
    arr = np.asarray(dists, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"{name}: expected a 2-d array, got shape {arr.shape}")
    if np.any(arr < 0):
        raise ValueError(f"{name}: negative probabilities")
    sums = arr.sum(axis=1)
    if np.any(np.abs(sums - 1.0) > PROB_SUM_TOL):
        worst = int(np.argmax(np.abs(sums - 1.0)))
        raise ValueError(f"{name}: row {worst} sums to {sums[worst]!r}, not 1")
    return arr


def check_probability(value: float, name: str) -> float:
    value = float(value)
    if not 0.0 <= value <= 1.0:
        raise ValueError(f"{name} must be in [0, 1], got {value}")
    return value


def check_positive(value, name: str):
    if value <= 0:
        raise ValueError(f"{name} must be positive, got {value}")
    return value


def check_non_negative(value, name: str):
    if value < 0:
        raise ValueError(f"{name} must be non-negative, got {value}")
    return value
