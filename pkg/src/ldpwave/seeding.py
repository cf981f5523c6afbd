"""Counter-based seed derivation.

Every random quantity is keyed by a path of integers below one master seed
(master -> replication -> record -> slot).  Keys are combined with the
splitmix64 finaliser, so a value depends only on its own path and never on
how work is split between processes.
"""
from __future__ import annotations

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_MASK = (1 << 64) - 1


def splitmix64(x):
    """splitmix64 finaliser applied elementwise to uint64 data (wrapping arithmetic)."""
    z = np.asarray(x, dtype=np.uint64) + _GOLDEN
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def _as_u64(v) -> np.ndarray:
    if isinstance(v, np.ndarray):
        return v if v.dtype == np.uint64 else v.astype(np.int64).astype(np.uint64)
    return np.uint64(int(v) & _MASK)


def mix(*keys):
    """Fold a path of (possibly array-valued, possibly negative) integer keys into uint64 hashes."""
    with np.errstate(over="ignore"):
        h = np.zeros((), dtype=np.uint64)
        for key in keys:
            h = splitmix64(h ^ _as_u64(key))
    return h


def derive_seed(master: int, *path: int) -> int:
    """Derive a 64-bit child seed from ``master`` and an integer path."""
    return int(mix(int(master) & _MASK, *path))


def uniform_from_hash(h) -> np.ndarray:
    """Map uint64 hashes to floats strictly inside ``(0, 1)``."""
    # 52 bits so that the half-offset endpoints stay exactly representable
    return ((np.asarray(h, dtype=np.uint64) >> np.uint64(12)).astype(np.float64) + 0.5) * 2.0**-52


def generator(master: int, *path: int) -> np.random.Generator:
    """A PCG64 generator seeded from a derived path."""
    return np.random.Generator(np.random.PCG64(derive_seed(master, *path)))
