"""Counter-based random streams.

Every random bit used by a percolation trial is a pure function of
``(seed, trial, tag, counter)``, so a trial can be replayed in any order,
on any worker, and an individual edge can be queried without generating
the rest of the configuration.  Bulk streams (branching, tree building)
use numpy's Philox generator keyed the same way.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB
_INV53 = 2.0 ** -53

# stream tags
BOND = 1
SITE = 2
EXTRA = 3
BRANCHING = 4
OMEGA = 5
UPSILON = 6
FOREST = 7


def _mix(z: int) -> int:
    z = (z + _GOLDEN) & MASK64
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


def stream_key(seed: int, trial: int, tag: int) -> int:
    """64-bit key identifying one independent stream."""
    return _mix(_mix(_mix(seed & MASK64) ^ (trial & MASK64)) ^ tag)


def uniform(key: int, counter: int) -> float:
    """Uniform double in [0, 1) for position ``counter`` of stream ``key``."""
    return (_mix(key ^ _mix(counter & MASK64)) >> 11) * _INV53


def _mix_np(z: np.ndarray) -> np.ndarray:
    z = z + np.uint64(_GOLDEN)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_M1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_M2)
    return z ^ (z >> np.uint64(31))


def uniforms(key: int, counters) -> np.ndarray:
    """Vectorised :func:`uniform`; bit-identical to the scalar version."""
    c = np.asarray(counters, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = _mix_np(np.uint64(key) ^ _mix_np(c))
    return (z >> np.uint64(11)).astype(np.float64) * _INV53


def generator(seed: int, *spawn: int) -> np.random.Generator:
    """A Philox-backed numpy Generator for the sub-stream ``spawn`` of ``seed``."""
    ss = np.random.SeedSequence(seed & MASK64, spawn_key=tuple(int(s) for s in spawn))
    return np.random.Generator(np.random.Philox(ss))
