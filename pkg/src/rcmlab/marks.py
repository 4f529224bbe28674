"""Deterministic pair marks via a counter-based hash.

Every unordered pair of point ids gets an i.i.d.-looking uniform mark in
[0, 1).  Marks are a pure function of (seed, min(id), max(id)), so they are
order independent, allocation free, reproducible under parallel evaluation,
and naturally support "fresh marks for an added point": reserved negative
ids yield marks that coexist consistently with the base configuration.
"""

from __future__ import annotations

import numpy as np

_C1 = np.uint64(0xBF58476D1CE4E5B9)
_C2 = np.uint64(0x94D049BB133111EB)
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_INV_2_64 = 2.0 ** -64


def _mix(z: np.ndarray) -> np.ndarray:
    """SplitMix64 finalizer, vectorized over uint64 arrays."""
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * _C1
        z = (z ^ (z >> np.uint64(27))) * _C2
    return z ^ (z >> np.uint64(31))


class PairMarkSource:
    """Uniform [0,1) marks for unordered id pairs, keyed by a 64-bit seed."""

    def __init__(self, seed: int):
        self.seed = int(seed)
        with np.errstate(over="ignore"):
            self._h0 = _mix(np.uint64(self.seed & 0xFFFFFFFFFFFFFFFF)
                            + _GOLDEN)

    def mark(self, i, j):
        """Mark of the unordered pair {i, j}.

        Accepts scalars or equal-shaped integer arrays; ids may be negative
        (reserved for points inserted by difference operators).
        """
        i = np.asarray(i, dtype=np.int64)
        j = np.asarray(j, dtype=np.int64)
        if np.any(i == j):
            raise ValueError("pair marks are defined for distinct ids only")
        lo = np.minimum(i, j).astype(np.uint64)
        hi = np.maximum(i, j).astype(np.uint64)
        with np.errstate(over="ignore"):
            h = _mix(_mix(self._h0 ^ lo) ^ (hi + _GOLDEN))
        out = h.astype(np.float64) * _INV_2_64
        if out.ndim == 0:
            return float(out)
        return out
