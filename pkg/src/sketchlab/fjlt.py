"""Fast JL transform ``Psi = Theta H D_sigma``.

``D_sigma`` flips signs, ``H`` is the orthonormal Walsh-Hadamard matrix and
``Theta = sqrt(n/m) * diag(theta)`` keeps each row independently with
probability ``m/n``.  The realized row count is therefore Binomial(n, m/n);
it is stored on the operator as ``m`` while the requested value is kept in
``target_m``.
"""
from __future__ import annotations

import logging
import math

import numpy as np

from . import _rng
from .errors import BadDimension, DimensionMismatch, MOutOfRange
from .sketch_core import _as_matrix, _as_vector, _frozen

log = logging.getLogger(__name__)

_SELECT_STREAM = 1
_SIGN_STREAM = 2
_MAX_REDRAWS = 64


def fwht(X: np.ndarray) -> np.ndarray:
    """Orthonormal fast Walsh-Hadamard transform along axis 0 (returns a copy).

    Sylvester ordering, so the result equals ``hadamard(n) @ X / sqrt(n)``.
    """
    X = np.array(X, dtype=np.float64, copy=True)
    n = X.shape[0]
    if n & (n - 1):
        raise BadDimension(f"length {n} is not a power of two")
    tail = X.shape[1:]
    h = 1
    while h < n:
        Y = X.reshape((n // (2 * h), 2, h) + tail)
        a = Y[:, 0].copy()
        Y[:, 0] += Y[:, 1]
        Y[:, 1] = a - Y[:, 1]
        h *= 2
    return X / math.sqrt(n)


class FjltOperator:
    def __init__(self, n: int, target_m: int, seed: int, transform: str,
                 selected: np.ndarray, signs: np.ndarray, redraws: int):
        self.n = n
        self.target_m = target_m
        self.seed = seed
        self.transform = transform
        self.selected = _frozen(selected)
        self.signs = _frozen(signs)
        self.redraws = redraws
        self.m = int(selected.shape[0])

    def __repr__(self) -> str:
        return f"FjltOperator(n={self.n}, target_m={self.target_m}, rows={self.m}, seed={self.seed})"

    @property
    def scale(self) -> float:
        return math.sqrt(self.n / self.target_m)

    def apply(self, x) -> np.ndarray:
        x = _as_vector(x, self.n)
        return self.scale * fwht(self.signs * x)[self.selected]

    def apply_matrix(self, X) -> np.ndarray:
        X = _as_matrix(X, self.n)
        return self.scale * fwht(self.signs[:, None] * X)[self.selected]

    def to_dense(self) -> np.ndarray:
        return self.apply_matrix(np.eye(self.n))

    def descriptor(self) -> dict:
        return {"kind": "fjlt", "n": self.n, "m": self.target_m, "seed": self.seed,
                "transform": self.transform}


def build_fjlt(n: int, m: int, seed: int = 0, transform: str = "hadamard") -> FjltOperator:
    """Draw selectors and signs for an FJLT.

    If every selector comes up zero the selectors are redrawn (from the next
    attempt counter) and the event is logged.

    Raises:
        BadDimension: ``n`` not a power of two.
        MOutOfRange: ``m`` outside ``[1, n]``.
    """
    n, m = int(n), int(m)
    if transform != "hadamard":
        raise ValueError(f"unsupported transform {transform!r}")
    if n < 1 or n & (n - 1):
        raise BadDimension(f"n={n} must be a power of two")
    if not 1 <= m <= n:
        raise MOutOfRange(f"m={m} must lie in [1, {n}]")
    seed = _rng.normalize_seed(seed)
    coords = np.arange(n, dtype=np.uint64)
    signs = _rng.sign_bits(seed, _SIGN_STREAM, coords).astype(np.float64)
    p = m / n
    for attempt in range(_MAX_REDRAWS):
        u = _rng.uniform(seed, _SELECT_STREAM + 16 * attempt, coords)
        selected = np.flatnonzero(u < p)
        if selected.size:
            break
        log.info("FJLT seed=%d: no selector fired on attempt %d, redrawing", seed, attempt)
    else:  # pragma: no cover - probability (1-m/n)^(64n)
        raise RuntimeError("could not draw a nonempty selector set")
    return FjltOperator(n, m, seed, transform, selected, signs, attempt)


def apply_fjlt(op: FjltOperator, x) -> np.ndarray:
    return op.apply(x)
