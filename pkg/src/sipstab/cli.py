"""Command-line front end.

Exit codes: 0 success, 2 invalid input, 3 unmet prerequisite (no strictly
feasible point, infeasible reference point or empty feasible set).
Results go to stdout (or ``--out``); diagnostics go to stderr.

Defaults for tolerances, grids and sampling may be placed in a YAML file
named by the ``SIPSTAB_CONFIG`` environment variable, e.g.::

    tolerances: {membership: 1.0e-7}
    grid: {lower: -5, upper: 5, num: 21}
    samples: 2000
    radii: [0.1, 0.01]
    eps_schedule: [1, 0.1, 0]
    threads: 1
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import replace
from typing import Optional, Sequence

import numpy as np
import yaml

from . import __version__
from .config import Tolerances
from .convex_core import GridConfig
from .errors import InfeasiblePointError, InfeasibleSystemError, SpecError, SSCViolationError
from .optimality import ConsequenceQuery, check_stationarity_smooth, check_stationarity_upper, farkas_consequence
from .scenario_io import (BUILTINS, FORMATS, builtin, load_scenario, report_text, run_scenario,
                          with_overrides, write_report)
from .stability import (check_ssc, coderivative_member, coderivative_norm, distance_dual_detail,
                        distance_primal, lip_bound, lip_sample)

EXIT_OK, EXIT_INVALID, EXIT_PREREQ = 0, 2, 3
CONFIG_ENV = "SIPSTAB_CONFIG"

log = logging.getLogger("sipstab")


class UsageError(Exception):
    pass


def _floats(text: str) -> list:
    try:
        return [float(v) for v in text.replace(";", ",").split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _tol(text: str):
    key, sep, val = text.partition("=")
    if not sep or key not in Tolerances().as_dict():
        raise argparse.ArgumentTypeError(
            f"expected KEY=VALUE with KEY in {', '.join(Tolerances().as_dict())}, got {text!r}")
    try:
        v = float(val)
    except ValueError:
        raise argparse.ArgumentTypeError(f"tolerance value must be a number, got {val!r}") from None
    if not v > 0:
        raise argparse.ArgumentTypeError("tolerance values must be positive")
    return key, v


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError("expected a positive integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sipstab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    src = common.add_mutually_exclusive_group()
    src.add_argument("--builtin", choices=sorted(BUILTINS), help="built-in scenario")
    src.add_argument("--scenario", help="scenario YAML file")
    common.add_argument("--N", type=_positive_int, help="truncation level of example1_countable")
    common.add_argument("--M", type=_positive_int, help="truncation level of example2_unbounded")
    common.add_argument("--with-closure", action="store_true", help="declare the closure family (example1)")
    common.add_argument("--seed", type=int, help="random seed")
    common.add_argument("--eps-schedule", type=_floats, help="comma-separated epsilon values")
    common.add_argument("--grid-lower", type=float, help="lower end of the conjugate sampling box")
    common.add_argument("--grid-upper", type=float, help="upper end of the conjugate sampling box")
    common.add_argument("--grid-num", type=_positive_int, help="grid points per axis")
    common.add_argument("--tol", type=_tol, action="append", default=[], metavar="KEY=VALUE",
                        help="override a solver tolerance (repeatable)")
    common.add_argument("--xbar", type=_floats, help="reference point (defaults to the scenario's)")
    common.add_argument("--out", help="write results to this path instead of stdout")
    common.add_argument("--pretty", action="store_true", help="human-readable output")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")

    sub.add_parser("list-builtins", help="list built-in scenarios")
    sub.add_parser("check-ssc", parents=[common], help="strong Slater condition")
    p = sub.add_parser("distance", parents=[common], help="distance to F(p), dual and primal")
    p.add_argument("--x", type=_floats, help="point (defaults to every scenario probe)")
    p.add_argument("--p", type=_floats, help="parameter, one entry per constraint (default 0)")
    sub.add_parser("lip-bound", parents=[common], help="exact Lipschitz bound at (0, xbar)")
    p = sub.add_parser("lip-sample", parents=[common], help="sampled distance quotients")
    p.add_argument("--radii", type=_floats, help="comma-separated radii")
    p.add_argument("--samples", type=_positive_int, help="samples per radius")
    p.add_argument("--threads", type=_positive_int, help="parallel workers")
    p = sub.add_parser("coderivative", parents=[common], help="coderivative norm or membership")
    p.add_argument("--p-star", type=_floats, help="p* for a membership test")
    p.add_argument("--x-star", type=_floats, help="x* for a membership test")
    p = sub.add_parser("farkas", parents=[common], help="is <v, x> <= alpha a consequence?")
    p.add_argument("--v", type=_floats, help="query normal (defaults to the probes' queries)")
    p.add_argument("--alpha", type=float, help="query right-hand side")
    p.add_argument("--p", type=_floats, help="parameter (default 0)")
    p.add_argument("--soundness", type=int, default=1000, help="feasible points checked when a query holds")
    p = sub.add_parser("stationarity", parents=[common], help="stationarity certificate at (0, xbar)")
    p.add_argument("--grad-p", type=_floats, help="objective gradient in p")
    p.add_argument("--grad-x", type=_floats, help="objective gradient in x")
    p = sub.add_parser("run", parents=[common], help="run every analysis and write a report")
    p.add_argument("--format", choices=FORMATS, default="structured-text")
    p.add_argument("--timings", action="store_true", help="include wall-clock timings (not reproducible)")
    p.add_argument("--radii", type=_floats, help="comma-separated radii")
    p.add_argument("--samples", type=_positive_int, help="samples per radius")
    p.add_argument("--threads", type=_positive_int, help="parallel workers")
    return parser


def _env_config() -> dict:
    path = os.environ.get(CONFIG_ENV)
    if not path:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            data = yaml.safe_load(fh) or {}
    except (OSError, yaml.YAMLError) as exc:
        raise UsageError(f"cannot read {CONFIG_ENV}={path}: {exc}") from None
    if not isinstance(data, dict):
        raise UsageError(f"{CONFIG_ENV} file must hold a mapping")
    allowed = {"tolerances", "grid", "samples", "radii", "eps_schedule", "threads", "seed"}
    unknown = set(data) - allowed
    if unknown:
        raise UsageError(f"unknown keys in {CONFIG_ENV} file: {', '.join(sorted(unknown))}")
    return data


def _scenario(args, cfg):
    if args.builtin:
        kw = {}
        if args.N is not None:
            if args.builtin != "example1_countable":
                raise UsageError("--N applies to example1_countable only")
            kw["N"] = args.N
        if args.with_closure:
            if args.builtin != "example1_countable":
                raise UsageError("--with-closure applies to example1_countable only")
            kw["with_closure"] = True
        if args.M is not None:
            if args.builtin != "example2_unbounded":
                raise UsageError("--M applies to example2_unbounded only")
            kw["M"] = args.M
        s = builtin(args.builtin, **kw)
    elif args.scenario:
        if args.N is not None or args.M is not None or args.with_closure:
            raise UsageError("--N, --M and --with-closure apply to builtins only")
        s = load_scenario(args.scenario)
    else:
        raise UsageError("one of --builtin or --scenario is required")

    tols = dict(cfg.get("tolerances") or {})
    tols.update(dict(args.tol))
    grid = None
    g = dict(cfg.get("grid") or {})
    for key, val in (("lower", args.grid_lower), ("upper", args.grid_upper), ("num", args.grid_num)):
        if val is not None:
            g[key] = val
    if g:
        base = s.grid_default
        grid = GridConfig(g.get("lower", base.lower), g.get("upper", base.upper), g.get("num", base.num))
    radii = getattr(args, "radii", None) or cfg.get("radii")
    samples = getattr(args, "samples", None) or cfg.get("samples")
    seed = args.seed if args.seed is not None else cfg.get("seed")
    eps = args.eps_schedule if args.eps_schedule is not None else cfg.get("eps_schedule")
    try:
        s = with_overrides(s, tols or None, grid, seed, eps, radii, samples)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid override: {exc}") from None
    if args.xbar is not None:
        if len(args.xbar) != s.n:
            raise UsageError(f"--xbar needs {s.n} entries")
        s = replace(s, xbar=np.asarray(args.xbar, dtype=float))
    return s


def _fmt(v) -> str:
    if isinstance(v, (list, tuple, np.ndarray)):
        return "[" + ", ".join(_fmt(e) for e in np.asarray(v, dtype=float).reshape(-1)) + "]"
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (float, np.floating, int, np.integer)):
        return repr(float(v))
    return str(v)


def _need_xbar(s):
    if s.xbar is None:
        raise UsageError("scenario has no reference point; pass --xbar")
    return s.xbar


def _vector_arg(v, size, name):
    if v is None:
        return None
    if len(v) != size:
        raise UsageError(f"{name} needs {size} entries, got {len(v)}")
    return np.asarray(v, dtype=float)


def cmd_check_ssc(s, args, cfg) -> list:
    c = check_ssc(s.system, s.grids, s.closure_points, s.closure_justification, s.tolerances)
    lines = [f"SSC: {'satisfied' if c.satisfied else 'NOT satisfied'}"]
    if c.satisfied:
        lines += [f"witness: {_fmt(c.witness)}", f"slack: {_fmt(c.slack)}"]
    else:
        lines += [f"best_sup: {_fmt(c.best_value)}"]
    lines += [f"dual_check: {_fmt(c.dual_check)}",
              f"dual_route: {'satisfied' if c.dual_satisfied else 'NOT satisfied'}"]
    if c.diagnostic:
        print(f"warning: {c.diagnostic}", file=sys.stderr)
    return lines


def cmd_distance(s, args, cfg) -> list:
    T = len(s.system)
    if args.x is not None:
        points = [(_vector_arg(args.x, s.n, "--x"), _vector_arg(args.p, T, "--p") if args.p else np.zeros(T))]
    else:
        if not s.probes:
            raise UsageError("scenario has no probes; pass --x")
        points = [(pr.x, pr.p) for pr in s.probes]
    lines = []
    for k, (x, p) in enumerate(points):
        primal = distance_primal(s.system, p, x, s.tolerances)
        d = distance_dual_detail(s.system, p, x, s.grids, s.tolerances)
        pre = f"probe[{k}] " if len(points) > 1 else ""
        if args.pretty:
            lines.append(f"{pre}x={_fmt(x)}  dual={d.value:.10g}  primal={primal:.10g}  gap<={d.gap:.3g}")
        else:
            lines += [f"{pre}dual: {_fmt(d.value)}", f"{pre}primal: {_fmt(primal)}", f"{pre}gap: {_fmt(d.gap)}"]
    return lines


def cmd_lip_bound(s, args, cfg) -> list:
    xbar = _need_xbar(s)
    m = lip_bound(s.system, xbar, s.grids, s.sampling.eps_schedule, s.closure_points,
                  s.closure_justification, s.tolerances)
    if not args.pretty:
        return [_fmt(m.lip_value)]
    lines = [f"lip bound   {m.lip_value:.12g}", f"mode        {m.mode}"]
    if m.u_star is not None:
        lines += [f"u*          {_fmt(m.u_star)}", f"support     {', '.join(m.support)}",
                  f"attained    {m.attained}"]
    lines.append("epsilon     value          active")
    lines += [f"{e.epsilon:<11g} {e.value:<14.10g} {e.active}" for e in m.eps_diagnostics]
    return lines


def cmd_lip_sample(s, args, cfg) -> list:
    xbar = _need_xbar(s)
    threads = args.threads or cfg.get("threads") or 1
    rows = lip_sample(s.system, xbar, s.sampling.radii, s.sampling.samples, s.seed, int(threads), s.tolerances)
    if args.pretty:
        return ["radius        max ratio       nonzero  unresolved"] + \
            [f"{r.radius:<13g} {r.max_ratio:<15.10g} {r.nonzero:<8d} {r.unresolved}" for r in rows]
    return [f"{_fmt(r.radius)} {_fmt(r.max_ratio)}" for r in rows]


def cmd_coderivative(s, args, cfg) -> list:
    xbar = _need_xbar(s)
    if (args.p_star is None) != (args.x_star is None):
        raise UsageError("--p-star and --x-star go together")
    if args.p_star is not None:
        ps = _vector_arg(args.p_star, len(s.system), "--p-star")
        xs = _vector_arg(args.x_star, s.n, "--x-star")
        member, res, w = coderivative_member(s.system, xbar, ps, xs, s.grids, s.tolerances)
        return [f"member: {member}", f"residual: {_fmt(res)}"]
    v = coderivative_norm(s.system, xbar, s.grids, s.closure_points, s.closure_justification, s.tolerances)
    return [_fmt(v)]


def cmd_farkas(s, args, cfg) -> list:
    T = len(s.system)
    if args.v is not None:
        if args.alpha is None:
            raise UsageError("--v needs --alpha")
        p = _vector_arg(args.p, T, "--p") if args.p else np.zeros(T)
        items = [(p, ConsequenceQuery(_vector_arg(args.v, s.n, "--v"), args.alpha))]
    else:
        items = [(pr.p, q) for pr in s.probes for q in pr.queries]
        if not items:
            raise UsageError("scenario has no queries; pass --v and --alpha")
    lines = []
    for k, (p, q) in enumerate(items):
        r = farkas_consequence(s.system, p, q, s.grids, tolerances=s.tolerances,
                               soundness_samples=args.soundness, seed=s.seed)
        pre = f"query[{k}] " if len(items) > 1 else ""
        lines += [f"{pre}holds: {r.holds}", f"{pre}residual: {_fmt(r.residual)}"]
        if r.soundness is not None:
            lines.append(f"{pre}soundness: {'passed' if r.soundness.passed else 'FAILED'} "
                         f"({r.soundness.points} points, worst excess {_fmt(r.soundness.worst_excess)})")
    return lines


def cmd_stationarity(s, args, cfg) -> list:
    xbar = _need_xbar(s)
    if args.grad_p is not None or args.grad_x is not None:
        if args.grad_p is None or args.grad_x is None:
            raise UsageError("--grad-p and --grad-x go together")
        pairs = [(_vector_arg(args.grad_p, len(s.system), "--grad-p"), _vector_arg(args.grad_x, s.n, "--grad-x"))]
        smooth = True
    elif s.objective is not None:
        pairs = s.objective.gradients(xbar)
        smooth = s.objective.kind == "smooth"
    else:
        raise UsageError("scenario has no objective; pass --grad-p and --grad-x")
    if smooth:
        certs = [check_stationarity_smooth(s.system, xbar, pairs[0][0], pairs[0][1], s.grids, s.tolerances)]
        lines = []
    else:
        up = check_stationarity_upper(s.system, xbar, pairs, s.grids, s.tolerances)
        certs = list(up.certificates)
        lines = [f"all_satisfied: {up.all_satisfied}", f"vacuous: {up.vacuous}"]
    for k, c in enumerate(certs):
        pre = f"gradient[{k}] " if len(certs) > 1 else ""
        lines += [f"{pre}status: {c.status}", f"{pre}residual: {_fmt(c.residual)}",
                  f"{pre}multipliers: {_fmt(c.multipliers)}"]
    return lines


def cmd_run(s, args, cfg):
    threads = args.threads or cfg.get("threads") or 1
    report = run_scenario(s, threads=int(threads))
    if args.format == "csv-bundle":
        if not args.out:
            raise UsageError("--format csv-bundle needs --out DIRECTORY")
        write_report(report, args.out, "csv-bundle")
        return None
    if args.out:
        write_report(report, args.out, "structured-text", include_timings=args.timings)
        return None
    sys.stdout.write(report_text(report, include_timings=args.timings))
    return None


COMMANDS = {"check-ssc": cmd_check_ssc, "distance": cmd_distance, "lip-bound": cmd_lip_bound,
            "lip-sample": cmd_lip_sample, "coderivative": cmd_coderivative, "farkas": cmd_farkas,
            "stationarity": cmd_stationarity, "run": cmd_run}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_INVALID
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s: %(message)s", stream=sys.stderr)
    if args.command == "list-builtins":
        for name in sorted(BUILTINS):
            doc = (BUILTINS[name].__doc__ or "").strip().splitlines()[0]
            print(f"{name}: {doc}")
        return EXIT_OK
    try:
        cfg = _env_config()
        s = _scenario(args, cfg)
        lines = COMMANDS[args.command](s, args, cfg)
    except (SSCViolationError, InfeasiblePointError, InfeasibleSystemError) as exc:
        print(f"prerequisite failed: {exc}", file=sys.stderr)
        return EXIT_PREREQ
    except (UsageError, SpecError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    if lines is not None:
        text = "\n".join(lines) + "\n"
        if args.out:
            with open(args.out, "w", encoding="utf-8") as fh:
                fh.write(text)
        else:
            sys.stdout.write(text)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
