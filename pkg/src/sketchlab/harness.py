"""Experiment configuration, CSV ingestion, sweeps and reports.

A config is a JSON object validated against ``CONFIG_SCHEMA``.  Every grid
cell is a ``(m, s, seed)`` triple.  Cells run in a thread pool, but rows are
sorted before the report is assembled, so output bytes depend only on the
config.
"""
from __future__ import annotations

import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import jsonschema
import numpy as np

from . import __version__, _rng
from .errors import ConfigError, IoError, NonNumeric, RaggedRows, SketchLabError

EXPERIMENTS = ("distortion-sweep", "calibrate", "lsq-bench", "kappa-report")

CONFIG_SCHEMA = {
    "type": "object",
    "required": ["experiment"],
    "properties": {
        "experiment": {"enum": list(EXPERIMENTS)},
        "seed": {"type": "integer", "minimum": 0},
        "seeds": {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 1,
                  "uniqueItems": True},
        "replicates": {"type": "integer", "minimum": 1},
        "set": {"type": "object", "required": ["type"]},
        "problem": {"type": "object"},
        "sketch": {
            "type": "object",
            "properties": {
                "kind": {"enum": ["sjlt", "dense", "fjlt"]},
                "variant": {"enum": ["uniform", "block"]},
            },
        },
        "grid": {
            "type": "object",
            "properties": {
                "m": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1},
                "s": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1},
            },
        },
        "samples": {"type": "integer", "minimum": 1},
        "outer": {"type": "integer", "minimum": 1},
        "inner": {"type": "integer", "minimum": 1},
        "width_samples": {"type": "integer", "minimum": 2},
        "profile": {"type": "string"},
        "generator": {"type": "object", "required": ["n"]},
        "target": {"type": "number", "exclusiveMinimum": 0},
        "confidence": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "trials": {"type": "integer", "minimum": 30},
        "threads": {"type": "integer", "minimum": 1},
        "timing": {"type": "boolean"},
        "output": {"type": "object", "properties": {"report": {"type": "string"},
                                                    "plot": {"type": "string"}}},
    },
    "allOf": [
        {"if": {"properties": {"experiment": {"const": "calibrate"}}},
         "then": {"required": ["profile", "generator", "target"]}},
        {"if": {"properties": {"experiment": {"enum": ["distortion-sweep", "kappa-report"]}}},
         "then": {"required": ["set", "grid"]}},
        {"if": {"properties": {"experiment": {"const": "lsq-bench"}}},
         "then": {"required": ["problem", "grid"]}},
    ],
}


def parse_matrix_csv(path) -> np.ndarray:
    """Read a comma-separated numeric matrix (one row per line).

    Raises:
        IoError: missing/unreadable or empty file.
        RaggedRows: rows of different lengths.
        NonNumeric: a field that is not a decimal or scientific literal.
    """
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    rows = []
    for lineno, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            rows.append([float(tok) for tok in line.split(",")])
        except ValueError:
            bad = next(t for t in line.split(",") if not _is_float(t))
            raise NonNumeric(f"{path}:{lineno}: {bad.strip()!r} is not a number") from None
        if len(rows[-1]) != len(rows[0]):
            raise RaggedRows(f"{path}:{lineno}: {len(rows[-1])} fields, expected {len(rows[0])}")
    if not rows:
        raise IoError(f"{path} contains no data")
    return np.array(rows, dtype=np.float64)


def _is_float(tok: str) -> bool:
    try:
        float(tok)
        return True
    except ValueError:
        return False


def _fmt(v) -> str:
    return repr(float(v))


def write_matrix_csv(path, M) -> None:
    """Write with shortest round-trip float formatting (vectors become columns)."""
    M = np.asarray(M, dtype=np.float64)
    if M.ndim == 1:
        M = M[:, None]
    with open(path, "w", encoding="utf-8") as fh:
        for row in M:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def load_config(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from exc
    return validate_config(cfg)


def validate_config(cfg: dict) -> dict:
    try:
        jsonschema.validate(cfg, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config {where}: {exc.message}") from None
    return cfg


def config_seeds(cfg: dict) -> list[int]:
    if "seeds" in cfg:
        return list(cfg["seeds"])
    base = cfg.get("seed", 0)
    return [_rng.derive_seed(base, i) for i in range(cfg.get("replicates", 1))]


def resolve_set(spec: dict, seed: int):
    """Set descriptor for one cell; ``random_subspace`` specs are drawn per seed."""
    from .set_geometry import Subspace, descriptor_from_json, random_subspace

    if spec["type"] == "random_subspace":
        n, d = int(spec["n"]), int(spec["d"])
        if spec.get("basis", "haar") == "coordinate":
            return Subspace(np.eye(n)[:, :d])
        return Subspace(random_subspace(n, d, _rng.generator(seed, 7)))
    return descriptor_from_json(spec)


def build_problem(spec: dict, seed: int):
    """Least-squares instance from files (``A``, ``b``) or a Gaussian generator."""
    from . import least_squares as ls

    if "A" in spec:
        A = parse_matrix_csv(spec["A"]) if isinstance(spec["A"], str) else np.asarray(spec["A"], float)
        b = parse_matrix_csv(spec["b"]) if isinstance(spec["b"], str) else np.asarray(spec["b"], float)
        x_true = None
    else:
        rng = _rng.generator(seed, 11)
        n, d, k = int(spec["n"]), int(spec["d"]), int(spec.get("k", spec["d"]))
        A = rng.standard_normal((n, d))
        x_true = np.zeros(d)
        x_true[rng.choice(d, size=k, replace=False)] = rng.standard_normal(k) + 1.0
        b = A @ x_true + float(spec.get("noise", 1.0)) * rng.standard_normal(n)
    kind = spec.get("constraint", "none")
    d = A.shape[1]
    if kind == "none":
        cons = ls.Unconstrained()
    else:
        R = spec.get("radius")
        if R is None:
            if x_true is None:
                raise ConfigError("constrained problems read from files need a radius")
            R = float(np.abs(x_true).sum()) if kind == "l1" else None
        if kind == "l1":
            cons = ls.L1Ball(float(R))
        elif kind == "l21":
            nb, D = int(spec.get("blocks", d)), int(spec.get("block_dim", 1))
            if R is None:
                R = ls.l21_norm(x_true, nb, D)
            cons = ls.L21Ball(nb, D, float(R))
        else:
            raise ConfigError(f"unknown constraint {kind!r}")
    return ls.LsProblem(A, b.reshape(-1), cons)


@dataclass
class RunReport:
    experiment: str
    seed_list: list
    rows: list
    summary: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)
    wall_time: float | None = None

    def to_json(self) -> dict:
        out = {"version": __version__, "experiment": self.experiment, "seeds": self.seed_list,
               "rows": self.rows, "summary": self.summary}
        if self.extra:
            out["result"] = self.extra
        if self.wall_time is not None:
            out["wall_time"] = self.wall_time
        return out

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n"


def _cells(cfg: dict) -> list[tuple[int, int, int]]:
    grid = cfg["grid"]
    ms, ss = grid["m"], grid.get("s", [1])
    return sorted((m, s, seed) for m in ms for s in ss for seed in config_seeds(cfg))


def _make_op(cfg: dict, m: int, s: int, n: int, seed: int):
    from .sketch_core import SketchFamily

    sk = cfg.get("sketch", {})
    return SketchFamily(sk.get("kind", "sjlt"), m, n, s, sk.get("variant", "uniform")).build(seed)


def _annotate(cell, fn):
    try:
        return fn()
    except SketchLabError as exc:
        m, s, seed = cell
        exc.args = (f"cell m={m}, s={s}, seed={seed}: {exc}",) + exc.args[1:]
        raise


def _distortion_cell(cfg, cell):
    from .distortion import distortion

    m, s, seed = cell
    T = resolve_set(cfg["set"], seed)
    rep = distortion(_make_op(cfg, m, s, T.n, seed), T, samples=cfg.get("samples", 10**4), seed=seed)
    return {"m": m, "s": s, "seed": seed, "epsilon": rep.epsilon, "method": rep.method.value}


def _kappa_cell(cfg, cell):
    from .set_geometry import gaussian_width_mc, kappa_mc

    m, s, seed = cell
    T = resolve_set(cfg["set"], seed)
    rep = kappa_mc(T, m, s, cfg.get("q_grid"), cfg.get("outer", 1000), cfg.get("inner", 200), seed)
    g = gaussian_width_mc(T, cfg.get("width_samples", 10**4), seed)
    return {"m": m, "s": s, "seed": seed, "kappa": rep.kappa, "argmax_q": rep.argmax_q,
            "gaussian_width": g.mean, "gaussian_width_stderr": g.stderr}


def _lsq_cell(cfg, cell):
    from .least_squares import solve_sketched

    m, s, seed = cell
    p = build_problem(cfg["problem"], seed)
    rep = solve_sketched(p, _make_op(cfg, m, s, p.A.shape[0], seed), tol=cfg.get("tol", 1e-10),
                         seed=seed)
    return {"m": m, "s": s, "seed": seed, "ratio": rep.ratio, "f_star": rep.f_star, "f_hat": rep.f_hat,
            "z1": rep.z1, "z2": rep.z2, "lemma_bound_satisfied": rep.lemma_bound_satisfied}


_CELL_RUNNERS = {"distortion-sweep": (_distortion_cell, "epsilon"),
                 "kappa-report": (_kappa_cell, "kappa"),
                 "lsq-bench": (_lsq_cell, "ratio")}


def _summarize(rows: list, metric: str) -> list:
    groups: dict = {}
    for r in rows:
        groups.setdefault((r["m"], r["s"]), []).append(r[metric])
    out = []
    for (m, s), vals in sorted(groups.items()):
        v = np.asarray(vals, dtype=np.float64)
        out.append({"m": m, "s": s, "x": m, "count": int(v.size), "median": float(np.median(v)),
                    "q25": float(np.quantile(v, 0.25)), "q75": float(np.quantile(v, 0.75))})
    return out


def run_experiment(cfg: dict, threads: int | None = None) -> RunReport:
    """Execute a validated config.  Module errors carry the failing grid cell."""
    from .advisor import calibrate

    cfg = validate_config(cfg)
    threads = threads or cfg.get("threads", 1)
    t0 = time.perf_counter()
    kind = cfg["experiment"]
    if kind == "calibrate":
        res = calibrate(cfg["profile"], cfg["generator"], cfg["target"], cfg.get("confidence", 0.5),
                        cfg.get("seed", 0), cfg.get("trials", 30), threads=threads)
        report = RunReport(kind, [cfg.get("seed", 0)], res.history, extra=res.to_json())
    else:
        runner, metric = _CELL_RUNNERS[kind]
        cells = _cells(cfg)
        job = lambda cell: _annotate(cell, lambda: runner(cfg, cell))  # noqa: E731
        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                rows = list(pool.map(job, cells))
        else:
            rows = [job(c) for c in cells]
        report = RunReport(kind, config_seeds(cfg), rows, _summarize(rows, metric))
    if cfg.get("timing"):
        report.wall_time = time.perf_counter() - t0
    out = cfg.get("output", {})
    if out.get("report"):
        with open(out["report"], "w", encoding="utf-8") as fh:
            fh.write(report.dumps())
    if out.get("plot") and report.summary:
        emit_plot_data(report, out["plot"])
    return report


def emit_plot_data(report: RunReport, path) -> None:
    """CSV with header ``x,median,q25,q75``, one line per summary cell."""
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("x,median,q25,q75\n")
        for r in sorted(report.summary, key=lambda r: (r["x"], r["s"])):
            fh.write(",".join(_fmt(r[k]) for k in ("x", "median", "q25", "q75")) + "\n")


def slope_loglog(x, y) -> float:
    """Least-squares slope of ``log y`` against ``log x``."""
    lx, ly = np.log(np.asarray(x, float)), np.log(np.asarray(y, float))
    return float(np.polyfit(lx, ly, 1)[0])

