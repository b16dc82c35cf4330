"""Counter-based random streams.

All randomness in the sketch constructions is a pure function of
``(seed, stream, counter)`` so that any column (or coordinate) can be
generated independently of every other one.  The mixer is the SplitMix64
finalizer applied twice.
"""
from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_INV_2_53 = 1.0 / (1 << 53)


def _mix(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def normalize_seed(seed) -> int:
    seed = int(seed)
    return seed & MASK64


def hash3(seed, stream, counter) -> np.ndarray:
    """64-bit hash of ``(seed, stream, counter)``; broadcasts over arrays."""
    with np.errstate(over="ignore"):
        s = np.asarray(normalize_seed(seed), dtype=np.uint64)
        a = np.asarray(stream, dtype=np.uint64)
        c = np.asarray(counter, dtype=np.uint64)
        h = _mix(s + _GOLDEN * (a + np.uint64(1)))
        return _mix(h + _GOLDEN * (c + np.uint64(1)))


def uniform(seed, stream, counter) -> np.ndarray:
    """Uniform doubles in [0, 1) from the top 53 bits of ``hash3``."""
    h = hash3(seed, stream, counter)
    return (h >> np.uint64(11)).astype(np.float64) * _INV_2_53


def randbelow(seed, stream, counter, bound) -> np.ndarray:
    """Integers uniform on ``[0, bound)``; ``bound`` may be an array."""
    u = uniform(seed, stream, counter)
    r = np.floor(u * np.asarray(bound, dtype=np.float64)).astype(np.int64)
    return np.minimum(r, np.asarray(bound, dtype=np.int64) - 1)


def sign_bits(seed, stream, counter) -> np.ndarray:
    """+1/-1 as int8 from the lowest hash bit."""
    h = hash3(seed, stream, counter)
    return (1 - 2 * (h & np.uint64(1)).astype(np.int8)).astype(np.int8)


def derive_seed(seed, index: int) -> int:
    """Sub-seed for trial ``index``; used for per-trial operator draws."""
    return int(hash3(seed, 0xD1B54A32D192ED03, index))


def generator(seed, index: int = 0) -> np.random.Generator:
    """A numpy Generator keyed on ``(seed, index)`` for Monte Carlo loops."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([normalize_seed(seed), int(index)])))
