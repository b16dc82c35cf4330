"""Restricted isometry constants ``eps(Phi, T) = sup_{x in T} | ||Phi x||^2 - 1 |``.

Exact values are available for finite sets (direct evaluation), subspaces and
finite unions of them (spectral norm of the sketched Gram deviation) and k-sparse caps with a
manageable number of supports (enumeration).  Everything else goes through
``distortion_mc``, which is a lower bound of the true supremum.
"""
from __future__ import annotations

import enum
import itertools
import math
import os
import time
from dataclasses import dataclass, asdict

import numpy as np

from . import _rng
from .errors import BudgetExceeded, DimensionMismatch, InsufficientSamples, UnsupportedDescriptor
from .set_geometry import FiniteSet, KSparseCap, SetDescriptor, Subspace, UnionOfSubspaces
from .sketch_core import SketchOperator, _as_vector

DEFAULT_ENUM_BUDGET = 10**6
_MC_CHUNK = 4096
_ENUM_CHUNK = 8192


class Method(str, enum.Enum):
    EXACT_SPECTRAL = "ExactSpectral"
    EXACT_ENUMERATION = "ExactEnumeration"
    EXACT_FINITE = "ExactFinite"
    MONTE_CARLO = "MonteCarlo"


@dataclass
class DistortionReport:
    epsilon: float
    method: Method
    samples: int | None = None
    delta_diameter: float | None = None
    wall_time: float = 0.0

    def to_json(self) -> dict:
        out = asdict(self)
        out["method"] = self.method.value
        return out


def enum_budget() -> int:
    return int(os.environ.get("SKETCHLAB_MAX_ENUM", DEFAULT_ENUM_BUDGET))


def _check_n(op: SketchOperator, T: SetDescriptor) -> None:
    if op.n != T.n:
        raise DimensionMismatch(f"operator has n={op.n} but set lives in R^{T.n}")


def gram_deviation_norm(B: np.ndarray) -> float:
    """Spectral norm of ``B^T B - I`` (symmetric, so max |eigenvalue|)."""
    G = B.T @ B
    G[np.diag_indices_from(G)] -= 1.0
    w = np.linalg.eigvalsh(G)
    return float(np.abs(w).max())


def distortion_finite(op: SketchOperator, T: FiniteSet) -> DistortionReport:
    t0 = time.perf_counter()
    _check_n(op, T)
    Y = op.apply_matrix(T.points.T)
    eps = float(np.abs(np.einsum("ij,ij->j", Y, Y) - 1.0).max())
    return DistortionReport(eps, Method.EXACT_FINITE, wall_time=time.perf_counter() - t0)


def distortion_subspace(op: SketchOperator, T: Subspace) -> DistortionReport:
    t0 = time.perf_counter()
    _check_n(op, T)
    eps = gram_deviation_norm(op.apply_matrix(T.basis))
    return DistortionReport(eps, Method.EXACT_SPECTRAL, wall_time=time.perf_counter() - t0)


def distortion_union(op: SketchOperator, T: UnionOfSubspaces) -> DistortionReport:
    """Exact constant of a union of subspaces: the max over its members."""
    t0 = time.perf_counter()
    _check_n(op, T)
    eps = max(gram_deviation_norm(op.apply_matrix(S.basis)) for S in T.members)
    return DistortionReport(eps, Method.EXACT_SPECTRAL, wall_time=time.perf_counter() - t0)


def _colex_supports(n: int, k: int) -> np.ndarray:
    combos = np.array(list(itertools.combinations(range(n), k)), dtype=np.int64).reshape(-1, k)
    order = np.lexsort(combos.T)  # last column is the primary key -> colex order
    return combos[order]


def distortion_ksparse_enum(op: SketchOperator, T: KSparseCap, budget: int | None = None) -> DistortionReport:
    """Exact RIP constant of order ``k`` by enumerating all supports.

    Raises:
        BudgetExceeded: ``C(n, k)`` exceeds ``budget`` (default from
            ``SKETCHLAB_MAX_ENUM`` or 10**6).
    """
    t0 = time.perf_counter()
    _check_n(op, T)
    budget = enum_budget() if budget is None else budget
    count = math.comb(T.n, T.k)
    if count > budget:
        raise BudgetExceeded(f"C({T.n},{T.k}) = {count} supports exceed the budget {budget}")
    B = op.apply_matrix(T.columns(np.arange(T.n)))
    G = B.T @ B
    G[np.diag_indices_from(G)] -= 1.0
    supports = _colex_supports(T.n, T.k)
    eps = 0.0
    for lo in range(0, supports.shape[0], _ENUM_CHUNK):
        S = supports[lo:lo + _ENUM_CHUNK]
        sub = G[S[:, :, None], S[:, None, :]]
        w = np.linalg.eigvalsh(sub)
        eps = max(eps, float(np.abs(w).max()))
    return DistortionReport(eps, Method.EXACT_ENUMERATION, wall_time=time.perf_counter() - t0)


def _sampled_images(op: SketchOperator, T: SetDescriptor, samples: int, seed: int):
    """Yield ``(X, PhiX)`` chunks of sampled points, ``X`` as rows."""
    if isinstance(T, Subspace):
        B = op.apply_matrix(T.basis)
    for c, lo in enumerate(range(0, samples, _MC_CHUNK)):
        count = min(samples, lo + _MC_CHUNK) - lo
        rng = _rng.generator(seed, c)
        if isinstance(T, Subspace):
            C = T.sample_coefficients(rng, count)
            yield C @ T.basis.T, C @ B.T
        else:
            X = T.sample(rng, count)
            yield X, op.apply_matrix(X.T).T


def distortion_mc(op: SketchOperator, T: SetDescriptor, samples: int, seed: int) -> DistortionReport:
    """Max of ``| ||Phi x||^2 - 1 |`` over ``samples`` random points of ``T``.

    Always a lower bound on the exact constant for the same ``(Phi, T)``.
    """
    t0 = time.perf_counter()
    if samples < 1:
        raise InsufficientSamples("need at least one sample")
    if not isinstance(T, (FiniteSet, Subspace, KSparseCap, UnionOfSubspaces)):
        raise UnsupportedDescriptor(f"cannot sample from {type(T).__name__}")
    _check_n(op, T)
    eps = 0.0
    for _, Y in _sampled_images(op, T, samples, seed):
        eps = max(eps, float(np.abs(np.einsum("ij,ij->i", Y, Y) - 1.0).max()))
    return DistortionReport(eps, Method.MONTE_CARLO, samples=samples, wall_time=time.perf_counter() - t0)


def distortion(op: SketchOperator, T: SetDescriptor, samples: int = 10**4, seed: int = 0,
               budget: int | None = None) -> DistortionReport:
    """Exact method when the structure allows it, Monte Carlo otherwise."""
    if isinstance(T, FiniteSet):
        return distortion_finite(op, T)
    if isinstance(T, Subspace):
        return distortion_subspace(op, T)
    if isinstance(T, UnionOfSubspaces) and all(isinstance(S, Subspace) for S in T.members):
        return distortion_union(op, T)
    if isinstance(T, KSparseCap):
        try:
            return distortion_ksparse_enum(op, T, budget)
        except BudgetExceeded:
            pass
    return distortion_mc(op, T, samples, seed)


def _delta_weights(op, X2: np.ndarray) -> np.ndarray:
    if not hasattr(op, "delta_counts"):
        raise UnsupportedDescriptor(f"{type(op).__name__} has no delta pattern")
    return op.delta_counts(X2)


def delta_norm(op: SketchOperator, x) -> float:
    """``(1/sqrt(s)) max_i (sum_j delta_ij x_j^2)^(1/2)`` for the realized pattern."""
    x = _as_vector(x, op.n)
    return float(math.sqrt(_delta_weights(op, x * x).max()) / math.sqrt(op.s))


def delta_diameter(op: SketchOperator, T: SetDescriptor, samples: int, seed: int) -> float:
    """Sampled ``sup_{x in T} ||x||_delta`` (same sampling rule as ``distortion_mc``)."""
    if samples < 1:
        raise InsufficientSamples("need at least one sample")
    _check_n(op, T)
    best = 0.0
    for X, _ in _sampled_images(op, T, samples, seed):
        for x in X:
            best = max(best, delta_norm(op, x))
    return best
