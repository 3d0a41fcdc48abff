"""Deterministic stream derivation for replicated randomized procedures."""

from __future__ import annotations

import numpy as np

from .errors import DataError

__all__ = ["seeded_rng"]


def seeded_rng(seed: int, *key: int) -> np.random.Generator:
    """Generator for stream ``key`` under a master ``seed``.

    Streams are keyed by value, not by draw order, so replications can be
    evaluated in any order (or in parallel) with identical results.
    """
    if seed < 0 or any(k < 0 for k in key):
        raise DataError("seeds and stream keys must be non-negative integers")
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, key)]))
