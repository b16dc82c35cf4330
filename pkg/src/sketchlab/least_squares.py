"""Exact and sketched (constrained) least squares with Z1/Z2 certificates.

The objective is ``f(x) = ||Ax - b||_2^2`` over a convex set ``C`` (all of
``R^d``, an l1 ball, or an l_{2,1} ball of ``b_blocks`` contiguous blocks of
size ``D``).  The sketched problem replaces ``(A, b)`` by ``(Phi A, Phi b)``.

Given ``Phi`` and the normalized residual ``u`` at the optimum ``x*``,
``Z1 = inf ||Phi v||^2`` and ``Z2 = sup |<Phi u, Phi v> - <u, v>|`` over unit
``v`` in ``A T_C(x*)``.  Then ``f(x_hat) <= (1 + Z2/Z1)^2 f(x*)``, improving
to ``(1 + Z2^2/Z1^2) f(x*)`` when ``x*`` is a global minimizer of ``f``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np
import scipy.linalg

from . import _rng
from .errors import (BadBlockStructure, DimensionMismatch, InactiveConstraint, InsufficientSamples,
                     InvalidInput, MissingCertificates, NonConvergence, ZeroResidual)
from .sketch_core import SketchOperator

ZERO_OBJECTIVE = 1e-12
LEMMA_SLACK = 1e-9
ACTIVE_TOL = 1e-6


def project_l1(x, R: float) -> np.ndarray:
    """Euclidean projection onto ``{||x||_1 <= R}`` (sort-based soft threshold)."""
    x = np.asarray(x, dtype=np.float64)
    if R <= 0:
        raise InvalidInput(f"radius must be positive, got {R}")
    a = np.abs(x)
    if a.sum() <= R:
        return x.copy()
    u = np.sort(a)[::-1]
    cs = np.cumsum(u) - R
    j = np.arange(1, u.size + 1)
    rho = np.flatnonzero(u > cs / j)[-1]
    theta = cs[rho] / (rho + 1)
    return np.sign(x) * np.maximum(a - theta, 0.0)


def _blocks(x: np.ndarray, b: int, D: int) -> np.ndarray:
    if b < 1 or D < 1 or x.shape[-1] != b * D:
        raise BadBlockStructure(f"vector of length {x.shape[-1]} cannot be split into {b} blocks of {D}")
    return x.reshape(x.shape[:-1] + (b, D))


def l21_norm(x, b: int, D: int) -> float:
    x = np.asarray(x, dtype=np.float64)
    return float(np.linalg.norm(_blocks(x, b, D), axis=-1).sum())


def project_l21(x, b: int, D: int, R: float) -> np.ndarray:
    """Projection onto ``{||x||_{2,1} <= R}``: l1-project the block norms, rescale blocks."""
    x = np.asarray(x, dtype=np.float64)
    X = _blocks(x, b, D)
    v = np.linalg.norm(X, axis=1)
    w = project_l1(v, R)
    scale = np.divide(w, v, out=np.zeros_like(v), where=v > 0)
    return (X * scale[:, None]).reshape(-1)


@dataclass(frozen=True)
class Unconstrained:
    def project(self, x: np.ndarray) -> np.ndarray:
        return x

    def is_active(self, x: np.ndarray) -> bool:
        return False


@dataclass(frozen=True)
class L1Ball:
    R: float

    def __post_init__(self):
        if self.R <= 0:
            raise InvalidInput(f"radius must be positive, got {self.R}")

    def norm(self, x) -> float:
        return float(np.abs(x).sum())

    def project(self, x: np.ndarray) -> np.ndarray:
        return project_l1(x, self.R)

    def is_active(self, x: np.ndarray) -> bool:
        return self.norm(x) >= self.R * (1 - ACTIVE_TOL)


@dataclass(frozen=True)
class L21Ball:
    blocks: int
    D: int
    R: float

    def __post_init__(self):
        if self.R <= 0:
            raise InvalidInput(f"radius must be positive, got {self.R}")
        if self.blocks < 1 or self.D < 1:
            raise BadBlockStructure(f"invalid block structure b={self.blocks}, D={self.D}")

    def norm(self, x) -> float:
        return l21_norm(x, self.blocks, self.D)

    def project(self, x: np.ndarray) -> np.ndarray:
        return project_l21(x, self.blocks, self.D, self.R)

    def is_active(self, x: np.ndarray) -> bool:
        return self.norm(x) >= self.R * (1 - ACTIVE_TOL)


Constraint = Union[Unconstrained, L1Ball, L21Ball]


@dataclass(frozen=True)
class LsProblem:
    A: np.ndarray
    b: np.ndarray
    constraint: Constraint = field(default_factory=Unconstrained)

    def __post_init__(self):
        A = np.asarray(self.A, dtype=np.float64)
        b = np.asarray(self.b, dtype=np.float64).reshape(-1)
        if A.ndim != 2 or A.shape[0] != b.shape[0] or A.shape[0] < 1:
            raise DimensionMismatch(f"A has shape {A.shape} but b has length {b.shape[0]}")
        if isinstance(self.constraint, L21Ball) and self.constraint.blocks * self.constraint.D != A.shape[1]:
            raise BadBlockStructure(f"d={A.shape[1]} != b*D = {self.constraint.blocks}*{self.constraint.D}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    @property
    def d(self) -> int:
        return self.A.shape[1]

    def objective(self, x) -> float:
        r = self.A @ x - self.b
        return float(r @ r)


def _iteration_cap(d: int, tol: float) -> int:
    return 50 * d * max(1, math.ceil(math.log(1.0 / tol)))


def _pgd(A: np.ndarray, b: np.ndarray, constraint: Constraint, tol: float,
         accelerate: bool = False) -> tuple[np.ndarray, int]:
    """Projected gradient on ``1/2 ||Ax - b||^2`` with step ``1/L``."""
    d = A.shape[1]
    G = A.T @ A
    c = A.T @ b
    L = float(np.linalg.norm(A, 2)) ** 2
    x = np.zeros(d)
    if L == 0.0:
        return x, 0
    thresh = tol * (1.0 + float(np.abs(c).max(initial=0.0)))
    y, t = x, 1.0
    for it in range(1, _iteration_cap(d, tol) + 1):
        x_new = constraint.project(y - (G @ y - c) / L)
        step = L * np.linalg.norm(y - x_new)
        if accelerate:
            t_new = 0.5 * (1 + math.sqrt(1 + 4 * t * t))
            y = x_new + ((t - 1) / t_new) * (x_new - x)
            t = t_new
        else:
            y = x_new
        x = x_new
        if step <= thresh:
            return x, it
    raise NonConvergence(f"projected gradient did not reach tol={tol} in {it} iterations")


def _solve(A: np.ndarray, b: np.ndarray, constraint: Constraint, tol: float,
           accelerate: bool) -> tuple[np.ndarray, int]:
    if isinstance(constraint, Unconstrained):
        x, *_ = scipy.linalg.lstsq(A, b, lapack_driver="gelsy")
        return x, 0
    return _pgd(A, b, constraint, tol, accelerate)


def solve_exact(p: LsProblem, tol: float = 1e-10, accelerate: bool = False) -> tuple[np.ndarray, float]:
    """Minimizer ``x*`` of ``||Ax - b||^2`` over the constraint set and ``f(x*)``.

    Unconstrained problems get the least-norm solution from a pivoted
    orthogonal factorization.

    Raises:
        NonConvergence: the projected-gradient iteration cap was hit.
    """
    x, _ = _solve(p.A, p.b, p.constraint, tol, accelerate)
    return x, p.objective(x)


@dataclass
class SolveReport:
    x_star: np.ndarray
    x_hat: np.ndarray
    f_star: float
    f_hat: float
    ratio: float
    z1: float | None = None
    z2: float | None = None
    certificate_method: str | None = None
    global_minimizer: bool = True
    lemma_bound: float | None = None
    lemma_bound_satisfied: bool | None = None
    lemma_advisory: bool = False
    iterations_exact: int = 0
    iterations_sketched: int = 0
    rows: int = 0
    tol: float = 1e-10

    def to_json(self) -> dict:
        out = {k: v for k, v in self.__dict__.items()}
        out["x_star"] = self.x_star.tolist()
        out["x_hat"] = self.x_hat.tolist()
        return out


def objective_ratio(f_hat: float, f_star: float) -> float:
    if f_star <= ZERO_OBJECTIVE:
        return 1.0 if f_hat <= ZERO_OBJECTIVE else math.inf
    return f_hat / f_star


def lemma_bound(z1: float, z2: float, global_minimizer: bool) -> float:
    """Multiplier on ``f(x*)`` bounding ``f(x_hat)``; infinite when ``z1 <= 0``."""
    if z1 <= 0:
        return math.inf
    return 1.0 + (z2 / z1) ** 2 if global_minimizer else (1.0 + z2 / z1) ** 2


def check_lemma_bound(report: SolveReport) -> bool:
    """Whether ``f_hat <= bound * f_star`` (relative slack 1e-9).

    With one-sided Monte Carlo estimates (``report.lemma_advisory``) the
    result is indicative only.

    Raises:
        MissingCertificates: nonzero residual but no ``z1``/``z2``.
    """
    if report.f_star <= ZERO_OBJECTIVE:
        return True
    if report.z1 is None or report.z2 is None:
        raise MissingCertificates("report carries no Z1/Z2 values")
    bound = lemma_bound(report.z1, report.z2, report.global_minimizer)
    return bool(report.f_hat <= bound * report.f_star * (1 + LEMMA_SLACK))


def _residual_direction(p: LsProblem, x_star: np.ndarray) -> np.ndarray:
    r = p.A @ x_star - p.b
    nr = float(np.linalg.norm(r))
    if nr * nr <= ZERO_OBJECTIVE:
        raise ZeroResidual("f(x*) = 0: the guarantee holds trivially and u is undefined")
    return r / nr


@dataclass(frozen=True)
class Certificates:
    z1: float
    z2: float
    method: str  # "Exact" or "MC" (MC: z1 is an upper estimate, z2 a lower estimate)


def z_certificates_unconstrained(p: LsProblem, op: SketchOperator, x_star=None) -> Certificates:
    """Exact ``Z1``, ``Z2`` with the tangent cone equal to ``R^d``.

    Raises:
        ZeroResidual: ``f(x*) = 0``.
    """
    if x_star is None:
        x_star, _ = _solve(p.A, p.b, Unconstrained(), 1e-12, False)
    u = _residual_direction(p, np.asarray(x_star, dtype=np.float64))
    U = scipy.linalg.orth(p.A)
    B = op.apply_matrix(U)
    z1 = float(np.linalg.eigvalsh(B.T @ B)[0]) if U.shape[1] else 1.0
    z2 = float(np.linalg.norm(B.T @ op.apply(u) - U.T @ u))
    return Certificates(z1, z2, "Exact")


def sample_cone_directions(constraint: Constraint, x_star, count: int, rng: np.random.Generator) -> np.ndarray:
    """Feasible directions ``P_C(x* + t g) - x*`` (columns), zero ones dropped.

    ``g`` is standard Gaussian and ``t`` log-uniform over four decades scaled
    to the constraint radius.
    """
    x_star = np.asarray(x_star, dtype=np.float64)
    d = x_star.shape[0]
    radius = getattr(constraint, "R", 1.0)
    out = np.empty((d, count))
    for j in range(count):
        t = radius * 10.0 ** rng.uniform(-3, 1) / math.sqrt(d)
        out[:, j] = constraint.project(x_star + t * rng.standard_normal(d)) - x_star
    keep = np.linalg.norm(out, axis=0) > 1e-14 * (1 + radius)
    return out[:, keep]


def z_certificates_cone_mc(p: LsProblem, op: SketchOperator, x_star, samples: int, seed: int = 0,
                           fallback: bool = True) -> Certificates:
    """Sampled ``(z1_upper, z2_lower)`` over normalized ``A y`` with ``y`` in the cone.

    These are one-sided estimates, not certificates.  When ``x*`` is interior
    the tangent cone is all of ``R^d`` and the exact unconstrained values are
    returned instead (or ``InactiveConstraint`` is raised if ``fallback`` is
    false).
    """
    if samples < 1:
        raise InsufficientSamples("need at least one cone sample")
    x_star = np.asarray(x_star, dtype=np.float64)
    if not p.constraint.is_active(x_star):
        if fallback:
            return z_certificates_unconstrained(p, op, x_star)
        raise InactiveConstraint("x* is interior; the tangent cone is R^d")
    u = _residual_direction(p, x_star)
    Y = sample_cone_directions(p.constraint, x_star, samples, _rng.generator(seed, 0))
    V = p.A @ Y
    nv = np.linalg.norm(V, axis=0)
    V = V[:, nv > 0] / nv[nv > 0]
    if V.shape[1] == 0:
        raise InsufficientSamples("no usable cone directions were sampled")
    PV = op.apply_matrix(V)
    z1 = float(np.einsum("ij,ij->j", PV, PV).min())
    z2 = float(np.abs(PV.T @ op.apply(u) - V.T @ u).max())
    return Certificates(z1, z2, "MC")


def solve_sketched(p: LsProblem, op: SketchOperator, tol: float = 1e-10, certificates: bool = True,
                   cert_samples: int = 2000, seed: int = 0, accelerate: bool = False) -> SolveReport:
    """Solve the sketched program and compare it with the exact one."""
    if op.n != p.A.shape[0]:
        raise DimensionMismatch(f"operator has n={op.n} but A has {p.A.shape[0]} rows")
    x_star, it_star = _solve(p.A, p.b, p.constraint, tol, accelerate)
    PA = op.apply_matrix(p.A)
    Pb = op.apply(p.b)
    x_hat, it_hat = _solve(PA, Pb, p.constraint, tol, accelerate)
    f_star, f_hat = p.objective(x_star), p.objective(x_hat)
    rep = SolveReport(x_star=x_star, x_hat=x_hat, f_star=f_star, f_hat=f_hat,
                      ratio=objective_ratio(f_hat, f_star), iterations_exact=it_star,
                      iterations_sketched=it_hat, rows=int(PA.shape[0]), tol=tol)
    if not certificates or f_star <= ZERO_OBJECTIVE:
        return rep
    interior = not p.constraint.is_active(x_star)
    if interior:
        cert = z_certificates_unconstrained(p, op, x_star)
    else:
        cert = z_certificates_cone_mc(p, op, x_star, cert_samples, seed)
    rep.z1, rep.z2, rep.certificate_method = cert.z1, cert.z2, cert.method
    rep.global_minimizer = interior
    rep.lemma_advisory = cert.method != "Exact"
    rep.lemma_bound = lemma_bound(cert.z1, cert.z2, rep.global_minimizer)
    rep.lemma_bound_satisfied = check_lemma_bound(rep)
    return rep


@dataclass(frozen=True)
class SigmaEstimate:
    value: float
    method: str = "UpperEstimate"
    enumerated: bool = False
    starts: int = 0


def _shrink_to_ratio(Y: np.ndarray, b: int, D: int, c: float) -> np.ndarray:
    """Columns rescaled to unit norm with ``||.||_{2,1} <= c`` by block soft-thresholding.

    Each column is shrunk by the smallest threshold that meets the ratio
    (bisection); all-zero columns come back as NaN.
    """
    S = Y.shape[1]
    Yb = Y.T.reshape(S, b, D)
    v = np.linalg.norm(Yb, axis=2)

    def ratio(lam):
        w = np.maximum(v - lam[:, None], 0.0)
        nw = np.linalg.norm(w, axis=1)
        return w, np.divide(w.sum(axis=1), nw, out=np.ones(S), where=nw > 0)

    lo, hi = np.zeros(S), v.max(axis=1)
    need = ratio(lo)[1] > c
    hi = np.where(need, hi, 0.0)
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        over = ratio(mid)[1] > c
        lo = np.where(over, mid, lo)
        hi = np.where(over, hi, mid)
    w, _ = ratio(hi)
    scale = np.divide(w, v, out=np.zeros_like(v), where=v > 0)
    Z = (Yb * scale[:, :, None]).reshape(S, -1).T
    with np.errstate(invalid="ignore", divide="ignore"):
        Z = Z / np.linalg.norm(Z, axis=0)
    return Z


def sigma_min_k_estimate(A, k: float, b: int, D: int, budget: int = 64, seed: int = 0,
                         iters: int = 200) -> SigmaEstimate:
    """Upper estimate of ``inf ||Ay||_2`` over unit ``y`` with ``||y||_{2,1} <= 2 sqrt(k)``.

    Combines the smallest singular values of column submatrices spanning at
    most ``floor(4k)`` blocks (when ``C(b, .)`` fits in ``budget``; single
    blocks always) with projected descent on the sphere from ``budget``
    random starts.
    """
    A = np.asarray(A, dtype=np.float64)
    n, d = A.shape
    if d != b * D:
        raise BadBlockStructure(f"d={d} != b*D = {b}*{D}")
    if budget < 1:
        raise InvalidInput("budget must be at least 1")
    c = 2.0 * math.sqrt(k)

    def smin(cols):
        sub = A[:, cols]
        if sub.shape[1] > n:
            return 0.0
        return float(scipy.linalg.svdvals(sub)[-1])

    block_cols = [np.arange(l * D, (l + 1) * D) for l in range(b)]
    best = min(smin(cols) for cols in block_cols)
    r = min(int(math.floor(4 * k)), b)
    enumerated = False
    if r > 1 and math.comb(b, r) <= budget:
        import itertools
        for subset in itertools.combinations(range(b), r):
            best = min(best, smin(np.concatenate([block_cols[l] for l in subset])))
        enumerated = True

    L = float(np.linalg.norm(A, 2)) ** 2
    if L > 0 and best > 0:
        G = A.T @ A
        Y = _shrink_to_ratio(_rng.generator(seed, 1).standard_normal((d, budget)), b, D, c)
        for _ in range(iters):
            ok = np.isfinite(Y).all(axis=0)
            ok &= np.linalg.norm(Y.reshape(b, D, -1), axis=1).sum(axis=0) <= c * (1 + 1e-12)
            if not ok.any():
                break
            best = min(best, float(np.linalg.norm(A @ Y[:, ok], axis=0).min()))
            Y = _shrink_to_ratio(Y - G @ Y / L, b, D, c)
    return SigmaEstimate(best, "UpperEstimate", enumerated, budget)
