"""Sufficient (m, s) conditions as evaluable formula profiles.

Every sufficient condition is of the form ``m >= C * F(m, inputs)`` and
``s >= C * G(m, inputs)`` with unspecified universal constants ``C``.  Each
additive term of ``F``/``G`` is named; ``constants`` may override the global
multipliers ``"m"``/``"s"`` and any individual term (default 1.0).  Logs are
natural logs and every ``log m`` uses the current iterate.

``advise`` resolves the implicit dependence on ``m`` by the monotone
fixed-point iteration ``m <- max(ceil F(m), ceil G(m))`` from ``m = 16``.
Raising ``m`` to at least the required ``s`` keeps ``s <= m`` without giving
up the ``s`` inequality.  When ``eta`` is not given it tracks ``1/m``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import (BadBlockStructure, EpsilonOutOfRange, InvalidInput, MissingInput,
                     NoFixedPoint)

M0 = 16
MAX_ITER = 100
SLACK = 1e-9
_CEIL_TOL = 1e-12
_MAX_M = 1e300

ln = math.log


@dataclass
class Ctx:
    """Quantities visible to a formula term at iterate ``m``."""

    inp: dict
    m: int
    eps: float
    eta: float

    @property
    def lm(self) -> float:
        return ln(self.m)

    @property
    def leta(self) -> float:
        return ln(1.0 / self.eta)

    @property
    def ln_n(self) -> float:
        return ln(self.inp["n"])

    def __getitem__(self, key):
        return self.inp[key]


Term = Callable[[Ctx], float]


@dataclass(frozen=True)
class Profile:
    name: str
    required: tuple
    m_terms: dict
    s_terms: dict = field(default_factory=dict)
    needs_eta_bound: bool = False
    sparse: bool = True
    defaults: dict = field(default_factory=dict)
    prepare: Callable[[dict], dict] | None = None
    preconditions: Callable[[dict], dict] | None = None
    note: str = ""


def _weight(inp: dict) -> float:
    """``d_{2,1}^2`` if given, otherwise its bound ``k / sigma_min_k^2``."""
    if inp.get("d21") is not None:
        return float(inp["d21"]) ** 2
    k, sig = inp.get("k"), inp.get("sigma_min_k")
    if k is None or sig is None:
        raise MissingInput("need either d21 or both k and sigma_min_k")
    if sig <= 0:
        raise InvalidInput("sigma_min_k must be positive")
    return float(k) / float(sig) ** 2


def _prep_blocks(inp: dict) -> dict:
    inp = dict(inp)
    inp["_w"] = _weight(inp)
    if "d" in inp and inp["d"] is not None and "D" in inp and inp["D"] is not None:
        if inp["d"] != inp["b"] * inp["D"]:
            raise BadBlockStructure(f"d={inp['d']} != b*D = {inp['b']}*{inp['D']}")
    return inp


def _prep_manifold(inp: dict) -> dict:
    if inp["alpha"] * math.sqrt(inp["d"]) >= 1.0:
        raise InvalidInput("manifold recipe needs alpha * sqrt(d) < 1")
    return inp


def _prep_rank(inp: dict) -> dict:
    inp = dict(inp)
    if inp.get("rank") is None:
        if inp.get("d") is None:
            raise MissingInput("cls_unconstrained needs rank (or d)")
        inp["rank"] = inp["d"]
    return inp


def _lasso_alpha(c: Ctx) -> float:
    return c.ln_n ** 6 * c.lm ** 2 * ln(c["b"]) ** 2


def _L(c: Ctx) -> float:
    return min(ln(c["d"] / c.eps) ** 2, c.lm ** 2)


def _fjlt_beta(c: Ctx) -> float:
    return (c.leta ** 2 + ln(c["b"]) + c.ln_n) * c.ln_n * ln(c["b"]) ** 3 * ln(c["d"]) ** 2


def _max_entry_check(bound: Callable[[dict], float]):
    def check(inp):
        if inp.get("max_entry") is None:
            return {}
        return {"max_entry_bound": bool(inp["max_entry"] < bound(inp))}
    return check


PROFILES: dict[str, Profile] = {}


def _register(p: Profile) -> None:
    PROFILES[p.name] = p


_register(Profile(
    "subspace", ("d", "eps"),
    m_terms={"m.dim": lambda c: (c["d"] + c.lm) * _L(c) / c.eps ** 2,
             "m.conf": lambda c: c["d"] * c.leta / c.eps ** 2},
    s_terms={"s.chain": lambda c: c.lm * c.leta * _L(c) * c["mu"] ** 2 / c.eps ** 2,
             "s.conf": lambda c: c.leta ** 2 * c["mu"] ** 2 / c.eps ** 2},
    needs_eta_bound=True, defaults={"mu": 1.0},
    note="d-dimensional subspace with incoherence mu; probability 1 - eta"))

_register(Profile(
    "subspace_kappa", ("n", "d", "eps"),
    m_terms={"m.dim": lambda c: c["d"] * c.ln_n ** 5 * c.lm ** 4 / c.eps ** 2},
    s_terms={"s.base": lambda c: c.ln_n ** 4 * c.lm ** 6 / c.eps ** 2,
             "s.coherence": lambda c: c.ln_n ** 5 * c.lm ** 4 * c["mu"] ** 2 / c.eps ** 2},
    defaults={"mu": 1.0},
    note="subspace via the general kappa bound (expected distortion)"))

_register(Profile(
    "ksparse_dictionary", ("n", "k", "eps"),
    m_terms={"m.sparse": lambda c: c["k"] * c.ln_n ** 8 * c.lm / c.eps ** 2},
    s_terms={"s.base": lambda c: c.ln_n ** 7 * c.lm * c.leta / c.eps ** 2},
    needs_eta_bound=True,
    preconditions=_max_entry_check(lambda i: (i["k"] * ln(i["n"])) ** -0.5),
    note="k-sparse vectors in an orthogonal dictionary H with max|H_ij| < (k log n)^(-1/2)"))

_register(Profile(
    "ksparse_dictionary_kappa", ("n", "k", "eps"),
    m_terms={"m.sparse": lambda c: c["k"] * c.ln_n ** 6 * c.lm ** 4 / c.eps ** 2},
    s_terms={"s.base": lambda c: c.ln_n ** 4 * c.lm ** 6 / c.eps ** 2},
    preconditions=_max_entry_check(lambda i: i["k"] ** -0.5 / ln(i["n"])),
    note="k-sparse vectors via the kappa bound; needs max|H_ij| < k^(-1/2) / log n"))

_register(Profile(
    "flat_finite", ("n", "N", "alpha", "eps"),
    m_terms={"m.count": lambda c: ln(c["N"]) * c.lm ** 4 * c.ln_n ** 5 / c.eps ** 2},
    s_terms={"s.flat": lambda c: (c["alpha"] * ln(c["N"])) ** 2 * c.lm ** 4 * c.ln_n ** 5 / c.eps ** 2,
             "s.base": lambda c: c.lm ** 6 * c.ln_n ** 4 / c.eps ** 2},
    note="finite set of N points with sup-norm at most alpha"))

_register(Profile(
    "finite_union_incoherent", ("n", "d", "N", "alpha", "eps"),
    m_terms={"m.dim": lambda c: c.lm ** 4 * c.ln_n ** 5 * (c["d"] + ln(c["N"])) / c.eps ** 2},
    s_terms={"s.base": lambda c: c.lm ** 6 * c.ln_n ** 4 / c.eps ** 2,
             "s.incoherent": lambda c: (c["alpha"] * ln(c["N"])) ** 2 * c.lm ** 4 * c.ln_n ** 5 / c.eps ** 2},
    note="union of N d-dimensional subspaces, each alpha-incoherent"))

_register(Profile(
    "finite_union_coherent", ("n", "d", "N", "eps"),
    m_terms={"m.dim": lambda c: c.lm ** 4 * c.ln_n ** 5 * c["d"] / c.eps ** 2,
             "m.count": lambda c: c.lm ** 3 * c.ln_n ** 5 * ln(c["N"]) / c.eps ** 2},
    s_terms={"s.base": lambda c: c.lm ** 6 * c.ln_n ** 4 / c.eps ** 2,
             "s.count": lambda c: c.lm ** 4 * c.ln_n ** 5 * ln(c["N"]) / c.eps ** 2},
    note="union of N d-dimensional subspaces, no incoherence assumption"))

_register(Profile(
    "manifold", ("n", "d", "alpha", "eps"),
    m_terms={"m.dim": lambda c: c.lm ** 4 * c.ln_n ** 5 * c["d"] * ln(1.0 / (c["alpha"] * math.sqrt(c["d"]))) / c.eps ** 2},
    s_terms={"s.base": lambda c: c.lm ** 6 * c.ln_n ** 4 / c.eps ** 2,
             "s.tangent": lambda c: c.lm ** 4 * c.ln_n ** 7 * (c["alpha"] * c["d"]) ** 2 / c.eps ** 2},
    prepare=_prep_manifold,
    note="curve lengths on a d-dimensional manifold whose tangent spaces are alpha-incoherent"))

_register(Profile(
    "cls_unconstrained", ("eps",),
    m_terms={"m.rank": lambda c: c.leta * (c["rank"] + c.lm) * c.lm ** 2 / c.eps,
             "m.conf": lambda c: c.leta ** 2 * c["rank"] / c.eps},
    s_terms={"s.quad": lambda c: c["mu"] ** 2 * (c.leta ** 2 + c.leta * c.lm ** 3) / c.eps,
             "s.lin": lambda c: c["mu"] * (c.leta ** 1.5 + c.leta * c.lm ** 1.5) / math.sqrt(c.eps)},
    needs_eta_bound=True, defaults={"mu": 1.0}, prepare=_prep_rank,
    note="unconstrained least squares; f(x_hat) <= (1-eps)^-2 f(x_*)"))

_register(Profile(
    "cls_group_lasso", ("n", "b", "block_norm", "l21_linf", "eps"),
    m_terms={"m.cone": lambda c: c.leta * (_lasso_alpha(c) + c.leta * ln(c["b"])) * c["block_norm"] ** 2 * c["_w"] / c.eps ** 2},
    s_terms={"s.cone": lambda c: (c.leta * (ln(c["b"]) + c.leta) * (_lasso_alpha(c) + c.leta * ln(c["b"]))
                                  * c["l21_linf"] ** 2 * c["_w"] / c.eps ** 2)},
    needs_eta_bound=True, prepare=_prep_blocks,
    note="l_{2,1}-constrained least squares; pass d21 or (k, sigma_min_k)"))

_register(Profile(
    "fjlt_cls", ("n", "b", "d", "block_norm", "eps"),
    m_terms={"m.cone": lambda c: _fjlt_beta(c) * c["block_norm"] ** 2 * c["_w"] / c.eps ** 2},
    sparse=False, prepare=_prep_blocks,
    note="FJLT sketch of l_{2,1}-constrained least squares; s is reported as m (dense transform)"))


@dataclass
class SketchPlan:
    m: int
    s: int
    profile: str
    inputs: dict
    constants: dict
    iterations: int
    eta: float
    flags: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        inputs = {k: v for k, v in self.inputs.items() if not k.startswith("_")}
        return {"m": self.m, "s": self.s, "profile": self.profile, "inputs": inputs,
                "constants": self.constants, "iterations": self.iterations, "eta": self.eta,
                "flags": self.flags}


def _rhs(terms: dict, ctx: Ctx, constants: dict, scale_key: str) -> float:
    total = sum(constants.get(name, 1.0) * fn(ctx) for name, fn in terms.items())
    return constants.get(scale_key, 1.0) * total


def _ceil(x: float) -> int:
    if not math.isfinite(x) or x > _MAX_M:
        raise NoFixedPoint(f"requirement diverged ({x})")
    # Tolerate rounding noise just above an integer.
    return max(1, math.ceil(x - _CEIL_TOL * max(1.0, abs(x))))


def _context(profile: Profile, inp: dict, m: int) -> Ctx:
    eta = inp["eta"] if inp.get("eta") is not None else 1.0 / m
    return Ctx(inp, m, float(inp["eps"]), float(eta))


def profile_rhs(profile: str | Profile, inputs: dict, m: int, constants: dict | None = None) -> tuple[float, float]:
    """Right-hand sides ``(m_req, s_req)`` evaluated at iterate ``m``."""
    p = PROFILES[profile] if isinstance(profile, str) else profile
    inp = _prepare(p, inputs)
    constants = constants or {}
    ctx = _context(p, inp, m)
    m_req = _rhs(p.m_terms, ctx, constants, "m")
    s_req = _rhs(p.s_terms, ctx, constants, "s") if p.s_terms else 0.0
    return m_req, s_req


def _prepare(p: Profile, inputs: dict) -> dict:
    inp = {**p.defaults, **{k: v for k, v in inputs.items() if v is not None}}
    missing = [k for k in p.required if k not in inp]
    if missing:
        raise MissingInput(f"profile {p.name!r} needs {', '.join(missing)}")
    eps = inp["eps"]
    if not 0.0 < eps <= 0.5:
        raise EpsilonOutOfRange(f"eps={eps} must lie in (0, 1/2]")
    if inp.get("eta") is not None and not 0.0 < inp["eta"] < 1.0:
        raise InvalidInput(f"eta={inp['eta']} must lie in (0, 1)")
    if p.prepare is not None:
        inp = p.prepare(inp)
    return inp


def advise(profile: str, inputs: dict, constants: dict | None = None) -> SketchPlan:
    """Smallest fixed-point plan ``(m, s)`` for a profile.

    Raises:
        MissingInput: a required input is absent.
        EpsilonOutOfRange: ``eps`` outside ``(0, 1/2]``.
        NoFixedPoint: the iteration diverges or does not settle in 100 steps.
    """
    if profile not in PROFILES:
        raise InvalidInput(f"unknown profile {profile!r}; choose from {sorted(PROFILES)}")
    p = PROFILES[profile]
    inp = _prepare(p, inputs)
    constants = dict(constants or {})

    m = M0
    for it in range(1, MAX_ITER + 1):
        ctx = _context(p, inp, m)
        m_req = _ceil(_rhs(p.m_terms, ctx, constants, "m"))
        s_req = _ceil(_rhs(p.s_terms, ctx, constants, "s")) if p.s_terms else 1
        m_new = max(m_req, s_req) if p.sparse else m_req
        if m_new == m:
            break
        m = m_new
    else:
        raise NoFixedPoint(f"profile {profile!r} did not settle within {MAX_ITER} iterations")

    ctx = _context(p, inp, m)
    s = _ceil(_rhs(p.s_terms, ctx, constants, "s")) if p.s_terms and p.sparse else (m if not p.sparse else 1)
    s = min(s, m)
    flags = {"s_raised_m": bool(p.sparse and s_req > m_req)}
    if p.needs_eta_bound:
        flags["eta_le_1_over_m"] = bool(ctx.eta <= 1.0 / m * (1 + SLACK))
    if p.preconditions is not None:
        flags.update(p.preconditions(inp))
    echo = {k: v for k, v in inp.items()}
    return SketchPlan(m=m, s=s, profile=profile, inputs=echo, constants=constants,
                      iterations=it, eta=ctx.eta, flags=flags)


def plan_satisfies(plan: SketchPlan) -> bool:
    """Back-substitute ``(m, s)`` into the profile inequalities."""
    p = PROFILES[plan.profile]
    inputs = {k: v for k, v in plan.inputs.items() if not k.startswith("_")}
    m_req, s_req = profile_rhs(p, inputs, plan.m, plan.constants)
    ok = plan.m >= m_req * (1 - SLACK) and 1 <= plan.s <= plan.m
    if p.sparse and p.s_terms:
        ok = ok and plan.s >= s_req * (1 - SLACK)
    return bool(ok)


def block_norms(A, b: int, D: int) -> tuple[float, float]:
    """``(max block Frobenius norm, max row-block l2 norm)`` of ``A`` with ``d = b D``.

    The first is the largest ``||A_{:, B_l}||_F`` over column blocks; the second
    is ``||A||_{l_{2,1} -> l_inf} = max_{j, l} ||A_{j, B_l}||_2``.
    """
    A = np.asarray(A, dtype=np.float64)
    n, d = A.shape
    if d != b * D:
        raise BadBlockStructure(f"d={d} != b*D = {b}*{D}")
    R = (A ** 2).reshape(n, b, D).sum(axis=2)
    return float(math.sqrt(R.sum(axis=0).max(initial=0.0))), float(math.sqrt(R.max(initial=0.0)))


def restricted_eigenvalue_inputs(A, k: int, b: int, D: int, budget: int = 64, seed: int = 0) -> dict:
    """Matrix statistics consumed by the ``cls_group_lasso``/``fjlt_cls`` profiles.

    The restricted eigenvalue is an upper estimate, so plans built from it may
    under-provision ``m``.
    """
    from .least_squares import sigma_min_k_estimate

    block_norm, l21_linf = block_norms(A, b, D)
    est = sigma_min_k_estimate(A, k, b, D, budget=budget, seed=seed)
    return {"block_norm": block_norm, "l21_linf": l21_linf, "sigma_min_k": est.value,
            "sigma_method": est.method}


@dataclass
class CalibrationResult:
    constant: float
    quantile: float
    confidence: float
    trials: int
    at_lower_bound: bool
    history: list = field(default_factory=list)

    def to_json(self) -> dict:
        return dict(self.__dict__)


class _PlanTooLarge(Exception):
    pass


def _haar_or_coordinate(gen: dict, rng) -> np.ndarray:
    from .set_geometry import random_subspace
    n, d = int(gen["n"]), int(gen["d"])
    if gen.get("basis", "haar") == "coordinate":
        return np.eye(n)[:, :d]
    return random_subspace(n, d, rng)


def _make_instance(profile: str, gen: dict, rng, sigma_seed: int):
    """``(inputs, set_or_problem)`` for one calibration trial."""
    from . import least_squares as ls
    from .set_geometry import FiniteSet, KSparseCap, Subspace, UnionOfSubspaces, incoherence

    n = int(gen["n"])
    base = {"n": n, "eta": gen.get("eta")}
    if profile in ("subspace", "subspace_kappa"):
        U = _haar_or_coordinate(gen, rng)
        return {**base, "d": U.shape[1], "mu": incoherence(U)}, Subspace(U)
    if profile in ("ksparse_dictionary", "ksparse_dictionary_kappa"):
        return {**base, "k": int(gen["k"]), "max_entry": 1.0}, KSparseCap(n, int(gen["k"]))
    if profile == "flat_finite":
        P = rng.standard_normal((int(gen["N"]), n))
        P /= np.linalg.norm(P, axis=1, keepdims=True)
        return {**base, "N": P.shape[0], "alpha": float(np.abs(P).max())}, FiniteSet(P)
    if profile in ("finite_union_incoherent", "finite_union_coherent"):
        bases = [_haar_or_coordinate(gen, rng) for _ in range(int(gen["N"]))]
        alpha = max(incoherence(U) for U in bases)
        return ({**base, "d": int(gen["d"]), "N": len(bases), "alpha": alpha},
                UnionOfSubspaces(tuple(Subspace(U) for U in bases)))
    if profile == "cls_unconstrained":
        d = int(gen["d"])
        A = rng.standard_normal((n, d))
        b = A @ rng.standard_normal(d) + float(gen.get("noise", 1.0)) * rng.standard_normal(n)
        return {**base, "rank": int(np.linalg.matrix_rank(A)), "mu": incoherence(np.linalg.qr(A)[0])}, ls.LsProblem(A, b)
    if profile in ("cls_group_lasso", "fjlt_cls"):
        d, k, D = int(gen["d"]), int(gen["k"]), int(gen.get("D", 1))
        nb = d // D
        A = rng.standard_normal((n, d))
        x = np.zeros((nb, D))
        support = rng.choice(nb, size=k, replace=False)
        x[support] = rng.standard_normal((k, D)) + np.sign(rng.standard_normal((k, 1)))
        x = x.reshape(-1)
        b = A @ x + float(gen.get("noise", 1.0)) * rng.standard_normal(n)
        R = ls.l21_norm(x, nb, D)
        stats = restricted_eigenvalue_inputs(A, k, nb, D, budget=int(gen.get("sigma_budget", 32)), seed=sigma_seed)
        inputs = {**base, "b": nb, "D": D, "d": d, "k": k, "block_norm": stats["block_norm"],
                  "l21_linf": stats["l21_linf"], "sigma_min_k": stats["sigma_min_k"]}
        return inputs, ls.LsProblem(A, b, ls.L21Ball(nb, D, R))
    raise InvalidInput(f"profile {profile!r} has no calibration experiment")


def _trial_metric(profile: str, plan: SketchPlan, target, op_seed: int, gen: dict) -> float:
    from .distortion import distortion
    from .fjlt import build_fjlt
    from .least_squares import LsProblem, solve_sketched
    from .sketch_core import build_sjlt

    n = int(gen["n"])
    if profile == "fjlt_cls":
        op = build_fjlt(n, plan.m, op_seed)
    else:
        op = build_sjlt(plan.m, n, plan.s, "uniform", op_seed)
    if isinstance(target, LsProblem):
        rep = solve_sketched(target, op, tol=float(gen.get("tol", 1e-8)), certificates=False)
        return 1.0 - rep.ratio ** -0.5 if math.isfinite(rep.ratio) else 1.0
    return distortion(op, target, samples=int(gen.get("samples", 2000)), seed=op_seed).epsilon


def calibrate(profile: str, generator: dict, target_eps: float, confidence: float = 0.5, seed: int = 0,
              trials: int = 30, c_lo: float = 2.0 ** -60, max_doublings: int = 160,
              bisection_steps: int = 8, threads: int = 1) -> CalibrationResult:
    """Smallest common constant ``c`` (for both ``m`` and ``s``) meeting a distortion target.

    Each trial draws an instance from ``generator`` and a sketch from the plan
    ``advise(profile, ..., constants={"m": c, "s": c})``; instances and sketch
    seeds are shared across values of ``c``.  ``c`` passes when the
    ``confidence``-quantile of the trial metric is at most ``target_eps``.
    The metric is the distortion for set profiles and ``1 - ratio^(-1/2)``
    for least-squares profiles.  Plans are requested at
    ``min(target_eps, 1/2)``.  The search doubles from ``c_lo`` and then
    bisects geometrically.

    Raises:
        CalibrationBudgetExceeded: a plan needs more than ``n`` rows before
            the target is met.
    """
    from concurrent.futures import ThreadPoolExecutor

    from . import _rng
    from .errors import CalibrationBudgetExceeded

    if trials < 30:
        raise InvalidInput("calibration needs at least 30 trials")
    if not 0 < confidence < 1:
        raise InvalidInput("confidence must lie in (0, 1)")
    if not target_eps > 0:
        raise EpsilonOutOfRange("target must be positive")
    n = int(generator["n"])
    eps_plan = min(float(target_eps), 0.5)
    instances = [_make_instance(profile, generator, _rng.generator(seed, t), _rng.derive_seed(seed, 2 * t + 1))
                 for t in range(trials)]
    op_seeds = [_rng.derive_seed(seed, 2 * t) for t in range(trials)]
    pool = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None
    history = []

    def evaluate(c):
        constants = {"m": c, "s": c}
        plans = [advise(profile, {**inp, "eps": eps_plan}, constants) for inp, _ in instances]
        if max(p.m for p in plans) > n:
            raise _PlanTooLarge
        jobs = [(profile, p, target, op_seeds[t], generator) for t, (p, (_, target)) in enumerate(zip(plans, instances))]
        metrics = list(pool.map(lambda a: _trial_metric(*a), jobs)) if pool else [_trial_metric(*a) for a in jobs]
        q = float(np.quantile(metrics, confidence))
        history.append({"c": c, "quantile": q, "max_m": max(p.m for p in plans)})
        return q

    try:
        c = c_lo
        try:
            q = evaluate(c)
        except _PlanTooLarge:
            raise CalibrationBudgetExceeded(f"even c={c_lo} needs more than n={n} rows") from None
        if q <= target_eps:
            return CalibrationResult(c, q, confidence, trials, True, history)
        for _ in range(max_doublings):
            c *= 2
            try:
                q = evaluate(c)
            except _PlanTooLarge:
                raise CalibrationBudgetExceeded(
                    f"target {target_eps} not met before plans exceed n={n} rows (c={c})") from None
            if q <= target_eps:
                break
        else:
            raise CalibrationBudgetExceeded(f"target {target_eps} not met after {max_doublings} doublings")
        lo, hi, q_hi = c / 2, c, q
        for _ in range(bisection_steps):
            mid = math.sqrt(lo * hi)
            try:
                q = evaluate(mid)
            except _PlanTooLarge:
                q = math.inf
            if q <= target_eps:
                hi, q_hi = mid, q
            else:
                lo = mid
        return CalibrationResult(hi, q_hi, confidence, trials, False, history)
    finally:
        if pool:
            pool.shutdown()
