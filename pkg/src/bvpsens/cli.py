"""Command-line front end.

Exit codes: 0 success, 1 configuration or usage error, 2 solver failure,
3 disconjugacy violation, 4 verification failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys

import numpy as np

from . import _backend
from .errors import BVPSensError, DisconjugacyViolation, ProblemError, SingularJacobian, SolverFailure
from .functional import QuadratureRule
from .ivp import Tolerance
from .oracle import DEFAULT_H0, DEFAULT_TOL_REL, sweep, verify
from .problem import BUILTINS, ProblemSpec, builtin, parse_datum, validate
from .sens import all_sensitivities, check_disconjugacy
from .shoot import SolverOptions, linearize, newton_solve

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_DISCONJUGACY, EXIT_VERIFY = 0, 1, 2, 3, 4

_KEYS = ("n", "interval", "points", "multiplicities", "data", "p", "c", "d", "rhs")


class ConfigError(Exception):
    pass


def spec_from_dict(doc) -> ProblemSpec:
    """Build a ProblemSpec from a parsed config document.

    ``{"builtin": name}`` selects a catalogue problem; any other keys given
    alongside it override the catalogue values.
    """
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(doc) - set(_KEYS) - {"builtin"}
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    overrides = {k: doc[k] for k in _KEYS if k in doc}
    if "interval" in overrides:
        overrides["interval"] = tuple(overrides["interval"])
    try:
        if "builtin" in doc:
            if doc["builtin"] not in BUILTINS:
                raise ConfigError(f"unknown builtin {doc['builtin']!r}; choose from {sorted(BUILTINS)}")
            return builtin(doc["builtin"], **overrides)
        missing = [k for k in _KEYS if k not in doc]
        if missing:
            raise ConfigError(f"missing config keys: {', '.join(missing)}")
        return ProblemSpec(**overrides)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"malformed config: {exc}") from None


def load_config(path: str) -> ProblemSpec:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return spec_from_dict(doc)


def _fmt(v: float) -> str:
    if math.isnan(v):
        return "NaN"
    return format(v, ".17g")


def _csv(rows, out):
    for row in rows:
        out.write(",".join(r if isinstance(r, str) else _fmt(float(r)) for r in row) + "\n")


def _parse_floats(text, what):
    try:
        vals = [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise ConfigError(f"{what}: expected a comma-separated list of numbers, got {text!r}") from None
    return vals


def _options(args) -> SolverOptions:
    if args.tol <= 0 or args.quad_nodes < 2 or args.max_iter < 1 or args.grid < 2:
        raise ConfigError("--tol must be positive, --quad-nodes >= 2, --max-iter >= 1, --grid >= 2")
    guess = tuple(_parse_floats(args.guess, "--guess")) if args.guess else None
    return SolverOptions(
        tol=Tolerance(args.tol, args.tol),
        rule=QuadratureRule(args.quad_nodes),
        max_iter=args.max_iter,
        guess=guess,
    )


def _solve(vp, opts):
    try:
        return newton_solve(vp, opts)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _grid(vp, npts):
    return np.linspace(vp.points[0], vp.d, npts)


def cmd_solve(args, out):
    vp = validate(load_config(args.config))
    opts = _options(args)
    sol = _solve(vp, opts)
    xs = _grid(vp, args.grid)
    vals = sol.u(xs)
    out.write(",".join(["x"] + [f"u{i}" for i in range(vp.n)]) + "\n")
    _csv(([x, *row] for x, row in zip(xs, vals)), out)
    return EXIT_OK


def _select_data(vp, text):
    if text.strip().lower() == "all":
        return vp.datum_ids
    try:
        ids = [parse_datum(t) for t in text.split(",")]
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    for id in ids:
        if id not in vp.datum_ids:
            raise ConfigError(f"datum {id.label} does not exist in this problem")
    order = {id: q for q, id in enumerate(vp.datum_ids)}
    return tuple(sorted(set(ids), key=order.__getitem__))


def _solve_checked(vp, opts):
    """Newton solve that reports a singular shooting Jacobian as a
    disconjugacy violation when the full functional matrix is singular too."""
    try:
        return _solve(vp, opts)
    except SingularJacobian:
        check_disconjugacy(linearize(vp, None, opts))
        raise


def cmd_sens(args, out):
    vp = validate(load_config(args.config))
    opts = _options(args)
    ids = _select_data(vp, args.datum)
    sol = _solve_checked(vp, opts)
    table = all_sensitivities(sol, args.paper_signs, ids)
    xs = _grid(vp, args.grid)
    cols = [table[id](xs) for id in ids]
    out.write(",".join(["x"] + [id.label for id in ids]) + "\n")
    _csv(([x, *vals] for x, *vals in zip(xs, *cols)), out)
    return EXIT_OK


def cmd_verify(args, out):
    vp = validate(load_config(args.config))
    opts = _options(args)
    if args.h0 <= 0 or args.tol_rel <= 0:
        raise ConfigError("--h0 and --tol-rel must be positive")
    sol = _solve_checked(vp, opts)
    report = verify(vp, args.tol_rel, h0=args.h0, paper_signs=args.paper_signs, opts=opts, solution=sol)
    out.write(json.dumps(report.to_dict(), indent=2) + "\n")
    return EXIT_OK if report.passed else EXIT_VERIFY


def cmd_sweep(args, out):
    vp = validate(load_config(args.config))
    opts = _options(args)
    deltas = _parse_floats(args.deltas, "--deltas")
    if not deltas:
        raise ConfigError("--deltas must list at least one value")
    sol = _solve(vp, opts)
    try:
        report = sweep(vp, deltas, opts, solution=sol)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    out.write("datum,delta,sup_deviation,ratio_to_prev\n")
    first = set()
    for cell in report.cells:
        if cell.error:
            print(f"warning: {cell.datum.label} delta={_fmt(cell.delta)}: {cell.error}", file=sys.stderr)
        ratio = "" if cell.datum not in first else _fmt(cell.ratio_to_prev)
        first.add(cell.datum)
        out.write(f"{cell.datum.label},{_fmt(cell.delta)},{_fmt(cell.deviation)},{ratio}\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bvpsens",
        description="Solve multipoint BVPs with an integral condition and their boundary-data sensitivities.",
    )
    parser.add_argument("--backend", choices=_backend.available(), help="integration kernel (default: fastest available)")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("config", help="JSON problem description")
    common.add_argument("--tol", type=float, default=1e-10, help="integrator atol = rtol (default 1e-10)")
    common.add_argument("--quad-nodes", type=int, default=5, help="Gauss-Legendre nodes per panel (default 5)")
    common.add_argument("--grid", type=int, default=201, help="output grid points on [x_1, d] (default 201)")
    common.add_argument("--max-iter", type=int, default=50, help="Newton iteration limit (default 50)")
    common.add_argument("--guess", help="comma list of initial shooting values u^(i)(x_1), i >= m_1")

    sub.add_parser("solve", parents=[common], help="solve the BVP, print u and its derivatives as CSV")
    p = sub.add_parser("sens", parents=[common], help="print sensitivities as CSV")
    p.add_argument("--datum", default="all", help="all, or comma list of y:r:l, x:l, c, d, p")
    p.add_argument("--paper-signs", action="store_true", help="use -p u(c) / +p u(d) targets for c and d")
    p = sub.add_parser("verify", parents=[common], help="compare sensitivities against finite differences (JSON)")
    p.add_argument("--h0", type=float, default=DEFAULT_H0, help="relative finite-difference step (default 1e-3)")
    p.add_argument("--tol-rel", type=float, default=DEFAULT_TOL_REL, help="pass threshold on relative sup error")
    p.add_argument("--paper-signs", action="store_true", help="use -p u(c) / +p u(d) targets for c and d")
    p = sub.add_parser("sweep", parents=[common], help="continuous-dependence sweep (CSV)")
    p.add_argument("--deltas", required=True, help="comma list of strictly decreasing perturbations")
    return parser


COMMANDS = {"solve": cmd_solve, "sens": cmd_sens, "verify": cmd_verify, "sweep": cmd_sweep}


def main(argv=None, out=None) -> int:
    out = sys.stdout if out is None else out
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    prev = _backend.set_backend(args.backend) if args.backend else None
    try:
        return COMMANDS[args.command](args, out)
    except (ConfigError, ProblemError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DisconjugacyViolation as exc:
        print(f"error: DisconjugacyViolation: {exc}", file=sys.stderr)
        return EXIT_DISCONJUGACY
    except SolverFailure as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except BVPSensError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    finally:
        if prev is not None:
            _backend.set_backend(prev)


if __name__ == "__main__":
    sys.exit(main())
