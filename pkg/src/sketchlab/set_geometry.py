"""Set families on the unit sphere and their complexity parameters.

Each descriptor knows how to evaluate ``sup_{x in T} |<z, x>|`` exactly and how
to draw points of ``T`` for Monte Carlo sups.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _rng
from .errors import (DimensionMismatch, InsufficientSamples, InvalidInput,
                     NotOrthonormal, QOutOfRange, UnsupportedDescriptor)

ORTHO_TOL = 1e-10
UNIT_TOL = 1e-6


def check_orthonormal(U: np.ndarray, tol: float = ORTHO_TOL) -> np.ndarray:
    U = np.asarray(U, dtype=np.float64)
    if U.ndim == 1:
        U = U[:, None]
    if U.ndim != 2 or U.shape[1] > U.shape[0]:
        raise NotOrthonormal(f"basis must be n x d with d <= n, got shape {U.shape}")
    err = np.abs(U.T @ U - np.eye(U.shape[1])).max(initial=0.0)
    if err > tol:
        raise NotOrthonormal(f"columns deviate from orthonormal by {err:.3e}")
    return U


def _rows(Z, n: int) -> tuple[np.ndarray, bool]:
    Z = np.asarray(Z, dtype=np.float64)
    single = Z.ndim == 1
    Z = np.atleast_2d(Z)
    if Z.shape[1] != n:
        raise DimensionMismatch(f"expected vectors of length {n}, got shape {Z.shape}")
    return Z, single


class SetDescriptor:
    """Base class; subclasses are immutable dataclasses."""

    n: int

    def sup_batch(self, Z: np.ndarray) -> np.ndarray:
        """Row-wise ``sup_{x in T} |<z, x>|`` for a ``(k, n)`` array."""
        raise NotImplementedError

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        """``(count, n)`` array of points of ``T``."""
        raise UnsupportedDescriptor(f"{type(self).__name__} does not support sampling")

    def to_json(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class FiniteSet(SetDescriptor):
    """Finite point set; points within 1e-6 of unit norm are renormalized."""

    points: np.ndarray

    def __post_init__(self):
        P = np.atleast_2d(np.asarray(self.points, dtype=np.float64))
        if P.shape[0] == 0 or P.shape[1] == 0:
            raise InvalidInput("finite set needs at least one point")
        norms = np.linalg.norm(P, axis=1)
        bad = np.abs(norms - 1.0) > UNIT_TOL
        if bad.any():
            raise InvalidInput(f"point {int(np.argmax(bad))} has norm {norms[bad][0]:.6g}, not 1")
        P = P / norms[:, None]
        P.setflags(write=False)
        object.__setattr__(self, "points", P)

    @property
    def n(self) -> int:
        return self.points.shape[1]

    def sup_batch(self, Z):
        Z, _ = _rows(Z, self.n)
        return np.abs(Z @ self.points.T).max(axis=1)

    def sample(self, rng, count):
        return self.points[rng.integers(0, self.points.shape[0], size=count)]

    def to_json(self):
        return {"type": "finite", "points": self.points.tolist()}


@dataclass(frozen=True, eq=False)
class Subspace(SetDescriptor):
    """Unit sphere of the column span of an orthonormal basis ``U``."""

    basis: np.ndarray

    def __post_init__(self):
        U = check_orthonormal(self.basis).copy()
        U.setflags(write=False)
        object.__setattr__(self, "basis", U)

    @property
    def n(self) -> int:
        return self.basis.shape[0]

    @property
    def d(self) -> int:
        return self.basis.shape[1]

    def sup_batch(self, Z):
        Z, _ = _rows(Z, self.n)
        return np.linalg.norm(Z @ self.basis, axis=1)

    def sample_coefficients(self, rng, count) -> np.ndarray:
        C = rng.standard_normal((count, self.d))
        return C / np.linalg.norm(C, axis=1, keepdims=True)

    def sample(self, rng, count):
        return self.sample_coefficients(rng, count) @ self.basis.T

    def to_json(self):
        return {"type": "subspace", "basis": self.basis.tolist()}


@dataclass(frozen=True, eq=False)
class KSparseCap(SetDescriptor):
    """``H . S_{n,k}``: unit vectors that are ``k``-sparse in the dictionary ``H``."""

    n_dim: int
    k: int
    dictionary: np.ndarray | None = None

    def __post_init__(self):
        if not 1 <= self.k <= self.n_dim:
            raise InvalidInput(f"need 1 <= k <= n, got k={self.k}, n={self.n_dim}")
        if self.dictionary is not None:
            H = check_orthonormal(self.dictionary).copy()
            if H.shape != (self.n_dim, self.n_dim):
                raise NotOrthonormal(f"dictionary must be {self.n_dim} x {self.n_dim}")
            H.setflags(write=False)
            object.__setattr__(self, "dictionary", H)

    @property
    def n(self) -> int:
        return self.n_dim

    def coefficients(self, Z: np.ndarray) -> np.ndarray:
        return Z if self.dictionary is None else Z @ self.dictionary

    def sup_batch(self, Z):
        Z, _ = _rows(Z, self.n)
        C = np.abs(self.coefficients(Z))
        if self.k < self.n:
            C = -np.partition(-C, self.k - 1, axis=1)[:, :self.k]
        return np.linalg.norm(C, axis=1)

    def columns(self, support) -> np.ndarray:
        if self.dictionary is None:
            return np.eye(self.n)[:, support]
        return self.dictionary[:, support]

    def sample(self, rng, count):
        supports = np.argsort(rng.random((count, self.n)), axis=1)[:, :self.k]
        coef = rng.standard_normal((count, self.k))
        coef /= np.linalg.norm(coef, axis=1, keepdims=True)
        X = np.zeros((count, self.n))
        np.put_along_axis(X, supports, coef, axis=1)
        return X if self.dictionary is None else X @ self.dictionary.T

    def to_json(self):
        out = {"type": "ksparse", "n": self.n_dim, "k": self.k}
        if self.dictionary is not None:
            out["dictionary"] = self.dictionary.tolist()
        return out


@dataclass(frozen=True, eq=False)
class UnionOfSubspaces(SetDescriptor):
    members: tuple = field(default_factory=tuple)

    def __post_init__(self):
        members = tuple(m if isinstance(m, Subspace) else Subspace(m) for m in self.members)
        if not members:
            raise InvalidInput("union needs at least one subspace")
        if len({m.n for m in members}) != 1:
            raise DimensionMismatch("all subspaces in a union must share the ambient dimension")
        object.__setattr__(self, "members", members)

    @property
    def n(self) -> int:
        return self.members[0].n

    def sup_batch(self, Z):
        Z, _ = _rows(Z, self.n)
        return np.max([m.sup_batch(Z) for m in self.members], axis=0)

    def sample(self, rng, count):
        which = rng.integers(0, len(self.members), size=count)
        X = np.empty((count, self.n))
        for i, m in enumerate(self.members):
            idx = np.flatnonzero(which == i)
            if idx.size:
                X[idx] = m.sample(rng, idx.size)
        return X

    def to_json(self):
        return {"type": "union", "bases": [m.basis.tolist() for m in self.members]}


def sup_inner_product(T: SetDescriptor, z) -> float:
    """Exact ``sup_{x in T} |<z, x>|``."""
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 1:
        raise DimensionMismatch("z must be a vector")
    return float(T.sup_batch(z[None, :])[0])


def leverage_scores(U) -> np.ndarray:
    """Row norms of an orthonormal basis, i.e. ``||P_E e_j||_2`` for each ``j``."""
    U = check_orthonormal(U)
    return np.linalg.norm(U, axis=1)


def incoherence(U) -> float:
    """Largest leverage score; always in ``[sqrt(d/n), 1]``."""
    return float(leverage_scores(U).max())


@dataclass(frozen=True)
class Estimate:
    mean: float
    stderr: float
    samples: int


@dataclass(frozen=True)
class GeometryReport:
    kappa: float
    argmax_q: float
    q_grid: tuple
    terms: tuple
    stderrs: tuple
    outer_samples: int
    inner_samples: int
    gaussian_width: float | None = None
    gaussian_width_stderr: float | None = None

    def to_json(self) -> dict:
        return {"kappa": self.kappa, "argmax_q": self.argmax_q, "q_grid": list(self.q_grid),
                "terms": list(self.terms), "stderrs": list(self.stderrs),
                "outer_samples": self.outer_samples, "inner_samples": self.inner_samples,
                "gaussian_width": self.gaussian_width,
                "gaussian_width_stderr": self.gaussian_width_stderr}


_CHUNK = 4096


def gaussian_width_mc(T: SetDescriptor, samples: int, seed: int) -> Estimate:
    """Monte Carlo estimate of ``E sup_{x in T} |<g, x>|``.

    For the origin-symmetric sets handled here this is the Gaussian mean width.
    """
    if samples < 2:
        raise InsufficientSamples("need at least 2 samples")
    vals = np.empty(samples)
    for c, lo in enumerate(range(0, samples, _CHUNK)):
        hi = min(samples, lo + _CHUNK)
        G = _rng.generator(seed, c).standard_normal((hi - lo, T.n))
        vals[lo:hi] = T.sup_batch(G)
    return Estimate(float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(samples)), samples)


def default_q_grid(m: int, s: int, max_points: int = 12) -> list[float]:
    """Powers of two below ``(m/s) log s`` followed by ``(m/s) log s`` itself."""
    q_max = (m / s) * math.log(s)
    if q_max < 1:
        raise QOutOfRange(f"(m/s) log s = {q_max:.4g} < 1: no admissible moment")
    grid = []
    q = 1
    while q < q_max and len(grid) < max_points - 1:
        grid.append(float(q))
        q *= 2
    grid.append(q_max)
    return grid


def kappa_mc(T: SetDescriptor, m: int, s: int, q_grid: Sequence[float] | None = None,
             outer: int = 1000, inner: int = 200, seed: int = 0) -> GeometryReport:
    """Monte Carlo estimate of the masked-Gaussian complexity parameter kappa_{s,m}(T).

    For each ``q`` in the grid, ``outer`` Bernoulli masks with mean
    ``q s / (m log s)`` are drawn; for each mask the inner Gaussian expectation
    ``E_g sup_x |sum_j eta_j g_j x_j|`` is averaged over ``inner`` draws.  The
    ``q``-th empirical moment over masks, scaled by ``1/sqrt(q s)``, is the
    term for that ``q``; kappa is the largest term.  Per-term standard errors
    come from the delta method on the moment estimate.

    Raises:
        QOutOfRange: ``s < 2`` or a grid point outside ``[1, (m/s) log s]``.
        InsufficientSamples: ``inner < 100`` or ``outer < 10 * max(q_grid)``.
    """
    if s < 2:
        raise QOutOfRange("kappa needs s >= 2 so that log s > 0")
    q_max = (m / s) * math.log(s)
    grid = default_q_grid(m, s) if q_grid is None else [float(q) for q in q_grid]
    for q in grid:
        if not 1.0 <= q <= q_max * (1 + 1e-12):
            raise QOutOfRange(f"q={q} outside [1, {q_max:.6g}]")
    if inner < 100:
        raise InsufficientSamples(f"inner={inner} < 100")
    if outer < 10 * max(grid):
        raise InsufficientSamples(f"outer={outer} < 10 * max(q) = {10 * max(grid):.4g}")

    terms, errs = [], []
    for qi, q in enumerate(grid):
        p = min(1.0, q * s / (m * math.log(s)))
        rng = _rng.generator(seed, qi)
        Y = np.empty(outer)
        for o in range(outer):
            mask = rng.random(T.n) < p
            G = rng.standard_normal((inner, T.n)) * mask
            Y[o] = T.sup_batch(G).mean()
        Yq = Y ** q
        M = Yq.mean()
        se_M = Yq.std(ddof=1) / math.sqrt(outer)
        scale = 1.0 / math.sqrt(q * s)
        if M > 0:
            term = scale * M ** (1.0 / q)
            se = scale * (M ** (1.0 / q - 1.0)) * se_M / q
        else:
            term, se = 0.0, 0.0
        terms.append(float(term))
        errs.append(float(se))
    best = int(np.argmax(terms))
    return GeometryReport(kappa=terms[best], argmax_q=grid[best], q_grid=tuple(grid),
                          terms=tuple(terms), stderrs=tuple(errs),
                          outer_samples=outer, inner_samples=inner)


def descriptor_from_json(obj: dict, load_matrix=None) -> SetDescriptor:
    """Build a descriptor from its JSON form.

    Matrices may be inline nested lists or CSV paths; ``load_matrix`` resolves
    paths (defaults to :func:`sketchlab.harness.parse_matrix_csv`).
    """
    if load_matrix is None:
        from .harness import parse_matrix_csv as load_matrix

    def mat(v):
        return load_matrix(v) if isinstance(v, str) else np.asarray(v, dtype=np.float64)

    kind = obj.get("type")
    if kind == "finite":
        return FiniteSet(mat(obj["points"]))
    if kind == "subspace":
        return Subspace(mat(obj["basis"]))
    if kind == "ksparse":
        H = obj.get("dictionary")
        return KSparseCap(int(obj["n"]), int(obj["k"]), None if H is None else mat(H))
    if kind == "union":
        return UnionOfSubspaces(tuple(Subspace(mat(b)) for b in obj["bases"]))
    raise UnsupportedDescriptor(f"unknown set type {kind!r}")


def random_subspace(n: int, d: int, rng: np.random.Generator) -> np.ndarray:
    """Orthonormal basis of a Haar-random ``d``-dimensional subspace of R^n."""
    Q, R = np.linalg.qr(rng.standard_normal((n, d)))
    return Q * np.sign(np.diag(R))
