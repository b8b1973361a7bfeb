"""Deterministic keyed randomness.

Every stochastic input of a run (edge indicators, feelings, initial
spins, Poisson clock gaps, decision coins) is a pure function of one
64-bit master seed plus a structured key ``(purpose, k1, k2, ...)``.
Draws therefore do not depend on evaluation order, replay bit-exactly,
and coupled runs share streams simply by sharing the master seed.

The derivation is a chained splitmix64 finalizer over the key parts.
Distinct (purpose, key) tuples land in statistically independent
positions of the hash space.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB

_TAG_CACHE: dict[str, int] = {}


def _tag(purpose: str) -> int:
    """Stable 64-bit tag for a purpose string (not Python's salted hash)."""
    tag = _TAG_CACHE.get(purpose)
    if tag is None:
        tag = int.from_bytes(hashlib.sha256(purpose.encode("utf-8")).digest()[:8], "big")
        _TAG_CACHE[purpose] = tag
    return tag


def _mix(z: int) -> int:
    z &= _MASK
    z = ((z ^ (z >> 30)) * _M1) & _MASK
    z = ((z ^ (z >> 27)) * _M2) & _MASK
    return z ^ (z >> 31)


def _fold(state: int, part: int) -> int:
    return _mix(((state ^ (part & _MASK)) + _GOLDEN) & _MASK)


def _mix_array(z: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        z = z ^ (z >> np.uint64(30))
        z = z * np.uint64(_M1)
        z = z ^ (z >> np.uint64(27))
        z = z * np.uint64(_M2)
        return z ^ (z >> np.uint64(31))


def _fold_array(state: np.ndarray, part: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        return _mix_array((state ^ part) + np.uint64(_GOLDEN))


@dataclass(frozen=True)
class RandomnessPlan:
    """Hierarchical source of replayable random variates.

    Same (master_seed, purpose, key) always yields the same variate;
    streams for distinct (purpose, key) pairs behave independently.
    """

    master_seed: int

    def _chain(self, purpose: str, key: tuple[int, ...]) -> int:
        state = _fold(self.master_seed & _MASK, _tag(purpose))
        for part in key:
            state = _fold(state, part)
        return state

    def uniform(self, purpose: str, *key: int) -> float:
        """One uniform variate in [0, 1)."""
        return (self._chain(purpose, key) >> 11) * 2.0 ** -53

    def coin(self, purpose: str, *key: int) -> int:
        """One fair +-1 variate."""
        return 1 if (self._chain(purpose, key) >> 63) else -1

    def uniforms(self, purpose: str, keys: np.ndarray) -> np.ndarray:
        """Vectorized uniforms in [0, 1), one per key row.

        ``keys`` is an integer array of shape (n,) or (n, k); each row is
        a key tuple.  Bit-identical to calling :meth:`uniform` per row.
        """
        keys = np.asarray(keys)
        if keys.ndim == 1:
            keys = keys[:, None]
        parts = keys.astype(np.int64).view(np.uint64) if keys.dtype.kind == "i" else keys.astype(np.uint64)
        state = np.full(len(parts), _fold(self.master_seed & _MASK, _tag(purpose)), dtype=np.uint64)
        for c in range(parts.shape[1]):
            state = _fold_array(state, parts[:, c])
        return (state >> np.uint64(11)).astype(np.float64) * 2.0 ** -53

    def spawn(self, purpose: str, *key: int) -> "RandomnessPlan":
        """Derive an independent child plan (e.g. one per replica)."""
        return RandomnessPlan(self._chain("spawn:" + purpose, key))
