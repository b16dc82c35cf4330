"""Command-line entry point: ``sketchlab <subcommand> ...``.

Exit codes: 0 on success, 2 for configuration/input errors, 3 for numeric
failures.  Errors are written to stderr as a JSON object.
"""
from __future__ import annotations

import argparse
import json
import math
import sys

import numpy as np

from . import __version__
from .errors import ConfigError, SketchLabError

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


def _json_value(text: str, what: str):
    """Inline JSON, or ``@path`` / a path to a JSON file."""
    path = text[1:] if text.startswith("@") else text
    if text.startswith("@") or not text.lstrip().startswith(("{", "[")):
        try:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            from .errors import IoError
            raise IoError(f"cannot read {what} {path}: {exc}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{what} is not valid JSON: {exc}") from exc


def _clean(obj):
    """JSON-safe copy: arrays to lists, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _emit(args, payload) -> None:
    text = json.dumps(_clean(payload), indent=2, sort_keys=True) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _sketch_op(args, n: int):
    from .sketch_core import SketchFamily

    m = args.m if args.m is not None else n
    return SketchFamily(args.sketch, m, n, args.s, args.variant).build(args.seed)


def cmd_advise(args):
    from .advisor import advise, plan_satisfies

    inputs = _json_value(args.inputs, "inputs")
    constants = _json_value(args.constants, "constants") if args.constants else None
    plan = advise(args.profile, inputs, constants)
    out = plan.to_json()
    out["satisfied"] = plan_satisfies(plan)
    _emit(args, out)


def cmd_sketch_apply(args):
    from .harness import parse_matrix_csv, write_matrix_csv

    X = parse_matrix_csv(args.input)
    op = _sketch_op(args, X.shape[0])
    Y = op.apply_matrix(X)
    if args.out:
        write_matrix_csv(args.out, Y)
    else:
        sys.stdout.write("\n".join(",".join(repr(float(v)) for v in row) for row in Y) + "\n")
    if args.descriptor:
        with open(args.descriptor, "w", encoding="utf-8") as fh:
            json.dump(op.descriptor(), fh, indent=2, sort_keys=True)


def cmd_distortion(args):
    from .distortion import delta_diameter, distortion, distortion_mc
    from .harness import resolve_set

    T = resolve_set(_json_value(args.set, "set"), args.seed)
    op = _sketch_op(args, T.n)
    if args.method == "mc":
        rep = distortion_mc(op, T, args.samples, args.seed)
    else:
        rep = distortion(op, T, samples=args.samples, seed=args.seed)
    if args.delta and hasattr(op, "delta_counts"):
        rep.delta_diameter = delta_diameter(op, T, min(args.samples, 2000), args.seed)
    out = rep.to_json()
    out.pop("wall_time")
    out["sketch"] = op.descriptor()
    _emit(args, out)


def cmd_kappa(args):
    from dataclasses import replace

    from .harness import resolve_set
    from .set_geometry import gaussian_width_mc, kappa_mc

    T = resolve_set(_json_value(args.set, "set"), args.seed)
    rep = kappa_mc(T, args.m, args.s, args.q, args.outer, args.inner, args.seed)
    g = gaussian_width_mc(T, args.width_samples, args.seed)
    rep = replace(rep, gaussian_width=g.mean, gaussian_width_stderr=g.stderr)
    _emit(args, rep.to_json())


def cmd_lsq(args):
    from . import least_squares as ls
    from .harness import parse_matrix_csv

    A = parse_matrix_csv(args.matrix)
    b = parse_matrix_csv(args.rhs).reshape(-1)
    if args.constraint == "none":
        cons = ls.Unconstrained()
    elif args.radius is None:
        raise ConfigError("--radius is required for constrained problems")
    elif args.constraint == "l1":
        cons = ls.L1Ball(args.radius)
    else:
        blocks = args.blocks if args.blocks is not None else A.shape[1] // args.block_dim
        cons = ls.L21Ball(blocks, args.block_dim, args.radius)
    p = ls.LsProblem(A, b, cons)
    rep = ls.solve_sketched(p, _sketch_op(args, A.shape[0]), tol=args.tol, seed=args.seed)
    _emit(args, rep.to_json())


def cmd_calibrate(args):
    from .advisor import calibrate

    gen = _json_value(args.generator, "generator")
    res = calibrate(args.profile, gen, args.target, args.confidence, args.seed, args.trials,
                    threads=args.threads)
    _emit(args, res.to_json())


def cmd_bench(args):
    from .harness import emit_plot_data, load_config, run_experiment

    cfg = load_config(args.config)
    if args.seed_override is not None:
        cfg["seed"] = args.seed_override
    rep = run_experiment(cfg, threads=args.threads)
    if args.plot:
        emit_plot_data(rep, args.plot)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(rep.dumps())
    else:
        sys.stdout.write(rep.dumps())


def _add_sketch_flags(p, need_m=True):
    p.add_argument("--sketch", choices=["sjlt", "fjlt", "dense"], default="sjlt")
    p.add_argument("--m", type=int, required=need_m, help="sketch rows")
    p.add_argument("--s", type=int, default=1, help="nonzeros per column (sjlt)")
    p.add_argument("--variant", choices=["uniform", "block"], default="uniform")


def _global_flags(suppress: bool) -> argparse.ArgumentParser:
    # Subcommands re-accept the global flags; SUPPRESS keeps them from
    # overwriting a value given before the subcommand name.
    p = argparse.ArgumentParser(add_help=False)
    dflt = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    p.add_argument("--seed", type=int, default=dflt(0))
    p.add_argument("--threads", type=int, default=dflt(1))
    p.add_argument("--out", default=dflt(None), help="output path (default: stdout)")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _global_flags(suppress=True)
    parser = argparse.ArgumentParser(prog="sketchlab", parents=[_global_flags(suppress=False)],
                                     description="Sparse JL sketches: plans, distortion, least squares.")
    parser.add_argument("--version", action="version", version=f"sketchlab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("advise", parents=[common], help="sufficient (m, s) for a profile")
    p.add_argument("--profile", required=True)
    p.add_argument("--inputs", required=True, help="JSON object or path to one")
    p.add_argument("--constants", help="JSON object of constant overrides")
    p.set_defaults(func=cmd_advise)

    p = sub.add_parser("sketch-apply", parents=[common], help="apply a sketch to CSV columns")
    p.add_argument("--input", required=True, help="CSV matrix; the sketch acts on its columns")
    p.add_argument("--descriptor", help="write the operator descriptor JSON here")
    _add_sketch_flags(p)
    p.set_defaults(func=cmd_sketch_apply)

    p = sub.add_parser("distortion", parents=[common], help="restricted isometry constant on a set")
    p.add_argument("--set", required=True, help="set descriptor JSON or path")
    p.add_argument("--method", choices=["auto", "mc"], default="auto")
    p.add_argument("--samples", type=int, default=10**4)
    p.add_argument("--delta", action="store_true", help="also report the sampled delta diameter")
    _add_sketch_flags(p)
    p.set_defaults(func=cmd_distortion)

    p = sub.add_parser("kappa", parents=[common], help="Monte Carlo kappa and Gaussian width")
    p.add_argument("--set", required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--s", type=int, required=True)
    p.add_argument("--q", type=float, nargs="+", help="moment grid (default: powers of two)")
    p.add_argument("--outer", type=int, default=1000)
    p.add_argument("--inner", type=int, default=200)
    p.add_argument("--width-samples", type=int, default=10**4)
    p.set_defaults(func=cmd_kappa)

    p = sub.add_parser("lsq", parents=[common], help="exact vs sketched least squares")
    p.add_argument("--matrix", required=True)
    p.add_argument("--rhs", required=True)
    p.add_argument("--constraint", choices=["none", "l1", "l21"], default="none")
    p.add_argument("--radius", type=float)
    p.add_argument("--blocks", type=int)
    p.add_argument("--block-dim", type=int, default=1)
    p.add_argument("--tol", type=float, default=1e-10)
    _add_sketch_flags(p)
    p.set_defaults(func=cmd_lsq)

    p = sub.add_parser("calibrate", parents=[common], help="fit the constant of a profile")
    p.add_argument("--profile", required=True)
    p.add_argument("--generator", required=True, help="instance generator JSON or path")
    p.add_argument("--target", type=float, required=True)
    p.add_argument("--confidence", type=float, default=0.5)
    p.add_argument("--trials", type=int, default=30)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("bench", parents=[common], help="run an experiment config")
    p.add_argument("--config", required=True)
    p.add_argument("--plot", help="write x,median,q25,q75 CSV here")
    p.add_argument("--seed-override", type=int, help="replace the config seed")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        args.func(args)
    except SketchLabError as exc:
        code = EXIT_CONFIG if isinstance(exc, ConfigError) or _is_input_error(exc) else EXIT_NUMERIC
        sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc),
                                     "exit_code": code}) + "\n")
        return code
    return EXIT_OK


def _is_input_error(exc: Exception) -> bool:
    from . import errors as e
    return isinstance(exc, (e.MissingInput, e.InvalidInput, e.DimensionMismatch, e.BadBlockStructure,
                            e.EpsilonOutOfRange, e.UnsupportedDescriptor, e.NotOrthonormal,
                            e.InvalidSparsity, e.ZeroDimension, e.BadDimension, e.MOutOfRange,
                            e.QOutOfRange, e.InsufficientSamples))


if __name__ == "__main__":
    sys.exit(main())
