"""Sparse Johnson-Lindenstrauss sketches and a dense sign baseline.

An SJLT ``Phi`` is an ``m x n`` matrix with exactly ``s`` nonzeros per column,
each equal to ``+-1/sqrt(s)``.  Two samplers for the nonzero pattern are
provided:

* ``uniform``: each column picks ``s`` distinct rows uniformly at random
  (partial Fisher-Yates shuffle).
* ``block``: the rows are cut into ``s`` contiguous blocks of ``m/s`` rows and
  each column picks one row per block (CountSketch style).

Column ``j`` is generated from its own counter-based stream keyed on
``(seed, j)``, so construction is deterministic and independent of
evaluation order.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Protocol, runtime_checkable

import numpy as np
import scipy.sparse as sp

from . import _rng
from .errors import DimensionMismatch, InvalidSparsity, ZeroDimension

MAX_ROWS = 1 << 24
# Counter offset separating sign draws from index draws inside a column stream.
_SIGN_COUNTER = 1 << 32
# Bound on the Fisher-Yates scratch buffer (entries) per construction chunk.
_CHUNK_ENTRIES = 1 << 22


class Variant(str, enum.Enum):
    UNIFORM = "uniform"
    BLOCK = "block"


@runtime_checkable
class SketchOperator(Protocol):
    """What distortion and least-squares code needs from a sketch."""

    m: int
    n: int

    def apply(self, x: np.ndarray) -> np.ndarray: ...

    def apply_matrix(self, X: np.ndarray) -> np.ndarray: ...

    def to_dense(self) -> np.ndarray: ...

    def descriptor(self) -> dict: ...


def _as_vector(x, n: int) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != n:
        raise DimensionMismatch(f"expected a vector of length {n}, got shape {x.shape}")
    return x


def _as_matrix(X, n: int) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2 or X.shape[0] != n:
        raise DimensionMismatch(f"expected a matrix with {n} rows, got shape {X.shape}")
    return X


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


class SjltOperator:
    """A realized SJLT.  Immutable after construction.

    Attributes:
        pattern: ``(n, s)`` int array; ``pattern[j]`` lists the rows selected
            by column ``j`` in draw order.
        signs: ``(n, s)`` int8 array of +-1 matching ``pattern``.
    """

    def __init__(self, m: int, n: int, s: int, variant: Variant, seed: int,
                 pattern: np.ndarray, signs: np.ndarray):
        self.m = m
        self.n = n
        self.s = s
        self.variant = Variant(variant)
        self.seed = seed
        self.pattern = _frozen(pattern)
        self.signs = _frozen(signs)

    def __repr__(self) -> str:
        return f"SjltOperator(m={self.m}, n={self.n}, s={self.s}, variant={self.variant.value!r}, seed={self.seed})"

    @property
    def scale(self) -> float:
        return 1.0 / math.sqrt(self.s)

    @cached_property
    def _csc(self) -> sp.csc_matrix:
        data = self.signs.astype(np.float64).ravel() * self.scale
        indptr = np.arange(0, self.n * self.s + 1, self.s)
        return sp.csc_matrix((data, self.pattern.ravel(), indptr), shape=(self.m, self.n))

    def apply(self, x) -> np.ndarray:
        """``Phi @ x`` touching only the nonzero coordinates of ``x``."""
        x = _as_vector(x, self.n)
        nz = np.flatnonzero(x)
        vals = self.signs[nz] * (x[nz, None] * self.scale)
        return np.bincount(self.pattern[nz].ravel(), weights=vals.ravel(), minlength=self.m)

    def apply_matrix(self, X) -> np.ndarray:
        X = _as_matrix(X, self.n)
        return np.asarray(self._csc @ X)

    def to_dense(self) -> np.ndarray:
        return self._csc.toarray()

    def delta_counts(self, weights: np.ndarray) -> np.ndarray:
        """``sum_j delta_ij * weights_j`` for every row ``i``."""
        w = np.repeat(np.asarray(weights, dtype=np.float64), self.s)
        return np.bincount(self.pattern.ravel(), weights=w, minlength=self.m)

    def descriptor(self) -> dict:
        return {"kind": "sjlt", "m": self.m, "n": self.n, "s": self.s,
                "variant": self.variant.value, "seed": self.seed}


class DenseSignOperator:
    """Dense ``m x n`` matrix with i.i.d. entries ``+-1/sqrt(m)``."""

    def __init__(self, m: int, n: int, seed: int):
        if m < 1 or n < 1:
            raise ZeroDimension(f"m and n must be positive, got m={m}, n={n}")
        self.m = m
        self.n = n
        self.s = m
        self.seed = _rng.normalize_seed(seed)

    def __repr__(self) -> str:
        return f"DenseSignOperator(m={self.m}, n={self.n}, seed={self.seed})"

    @cached_property
    def _matrix(self) -> np.ndarray:
        cols = np.arange(self.n, dtype=np.uint64)[None, :]
        rows = np.arange(self.m, dtype=np.uint64)[:, None]
        M = _rng.sign_bits(self.seed, cols, rows).astype(np.float64) / math.sqrt(self.m)
        return _frozen(M)

    def apply(self, x) -> np.ndarray:
        return self._matrix @ _as_vector(x, self.n)

    def apply_matrix(self, X) -> np.ndarray:
        return self._matrix @ _as_matrix(X, self.n)

    def to_dense(self) -> np.ndarray:
        return self._matrix.copy()

    def delta_counts(self, weights: np.ndarray) -> np.ndarray:
        return np.full(self.m, float(np.sum(weights)))

    def descriptor(self) -> dict:
        return {"kind": "dense", "m": self.m, "n": self.n, "seed": self.seed}


def _check_params(m: int, n: int, s: int, variant: Variant) -> None:
    if m < 1 or n < 1 or s < 1:
        raise ZeroDimension(f"m, n, s must be positive, got m={m}, n={n}, s={s}")
    if m > MAX_ROWS:
        raise InvalidSparsity(f"m={m} exceeds the configured maximum {MAX_ROWS}")
    if s > m:
        raise InvalidSparsity(f"column sparsity s={s} exceeds m={m}")
    if variant is Variant.BLOCK and m % s:
        raise InvalidSparsity(f"block variant needs s | m, got m={m}, s={s}")


def _uniform_pattern(m: int, s: int, seed: int, cols: np.ndarray) -> np.ndarray:
    # Vectorized partial Fisher-Yates: step t swaps buf[t] with buf[t + U{0..m-t-1}].
    k = cols.shape[0]
    buf = np.tile(np.arange(m, dtype=np.int64), (k, 1))
    rows = np.arange(k)
    for t in range(s):
        r = t + _rng.randbelow(seed, cols, t, m - t)
        picked = buf[rows, r]
        buf[rows, r] = buf[rows, t]
        buf[rows, t] = picked
    return buf[:, :s].copy()


def _block_pattern(m: int, s: int, seed: int, cols: np.ndarray) -> np.ndarray:
    width = m // s
    t = np.arange(s, dtype=np.uint64)[None, :]
    offsets = _rng.randbelow(seed, cols[:, None], t, width)
    return offsets + width * np.arange(s, dtype=np.int64)[None, :]


def build_sjlt(m: int, n: int, s: int, variant="uniform", seed: int = 0) -> SjltOperator:
    """Draw an SJLT with column sparsity ``s``.

    Raises:
        InvalidSparsity: ``s > m``, or ``s`` does not divide ``m`` for the
            block variant.
        ZeroDimension: a nonpositive dimension.
    """
    m, n, s = int(m), int(n), int(s)
    variant = Variant(variant)
    _check_params(m, n, s, variant)
    seed = _rng.normalize_seed(seed)

    pattern = np.empty((n, s), dtype=np.int64)
    chunk = max(1, _CHUNK_ENTRIES // m) if variant is Variant.UNIFORM else n
    for lo in range(0, n, chunk):
        cols = np.arange(lo, min(n, lo + chunk), dtype=np.uint64)
        if variant is Variant.UNIFORM:
            pattern[lo:lo + cols.shape[0]] = _uniform_pattern(m, s, seed, cols)
        else:
            pattern[lo:lo + cols.shape[0]] = _block_pattern(m, s, seed, cols)

    counters = _SIGN_COUNTER + np.arange(s, dtype=np.uint64)[None, :]
    signs = _rng.sign_bits(seed, np.arange(n, dtype=np.uint64)[:, None], counters)
    return SjltOperator(m, n, s, variant, seed, pattern, signs)


def build_dense(m: int, n: int, seed: int = 0) -> DenseSignOperator:
    return DenseSignOperator(int(m), int(n), seed)


def apply(op: SketchOperator, x) -> np.ndarray:
    return op.apply(x)


def apply_matrix(op: SketchOperator, X) -> np.ndarray:
    return op.apply_matrix(X)


@dataclass(frozen=True)
class SketchFamily:
    """Build parameters for a sketch distribution; ``build(seed)`` draws one."""

    kind: str
    m: int
    n: int
    s: int = 1
    variant: str = "uniform"
    transform: str = "hadamard"

    def build(self, seed: int) -> SketchOperator:
        if self.kind == "sjlt":
            return build_sjlt(self.m, self.n, self.s, self.variant, seed)
        if self.kind == "dense":
            return build_dense(self.m, self.n, seed)
        if self.kind == "fjlt":
            from .fjlt import build_fjlt
            return build_fjlt(self.n, self.m, seed, self.transform)
        raise ValueError(f"unknown sketch kind {self.kind!r}")


def operator_from_descriptor(desc: dict) -> SketchOperator:
    """Regenerate an operator from its JSON descriptor (the pattern is never stored)."""
    kind = desc.get("kind", "sjlt")
    if kind == "sjlt":
        return build_sjlt(desc["m"], desc["n"], desc["s"], desc.get("variant", "uniform"), desc["seed"])
    if kind == "dense":
        return build_dense(desc["m"], desc["n"], desc["seed"])
    if kind == "fjlt":
        from .fjlt import build_fjlt
        return build_fjlt(desc["n"], desc["m"], desc["seed"], desc.get("transform", "hadamard"))
    raise ValueError(f"unknown sketch kind {kind!r}")


def expected_square_norm_check(family: SketchFamily, x, trials: int, seed: int) -> tuple[float, float]:
    """Sample mean and standard error of ``||Phi x||^2`` over fresh draws.

    Draw ``t`` uses the sub-seed ``derive_seed(seed, t)``.
    """
    if trials < 2:
        raise ValueError("trials must be at least 2")
    x = _as_vector(x, family.n)
    vals = np.empty(trials)
    for t in range(trials):
        y = family.build(_rng.derive_seed(seed, t)).apply(x)
        vals[t] = y @ y
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(trials))
