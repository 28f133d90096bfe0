"""Scenario files, built-in scenarios, batch runs and report serialization.

A scenario is a YAML document::

    name: demo
    dimension: 2
    constraints:
      - {label: "0", kind: affine, a: [1, 1], b: 0}
      - {label: disk, kind: quadratic, Q: [[2, 0], [0, 2]], c: [0, 0], d: -1}
      - {label: box, kind: max_affine, pieces: [{a: [1, 0], b: 1}, {a: [-1, 0], b: 1}]}
    xbar: [0, 0]
    probes:
      - {x: [1, 1], p: {"0": 0.1}, queries: [{v: [1, 1], alpha: 0.1}]}
    closure_points: {justification: "...", points: [[0, 1, 0]]}
    objective: {kind: smooth, p_weights: [1, 0, 0], c: [0, 0], H: [[1, 0], [0, 1]]}
    grids: {default: {lower: -5, upper: 5, num: 21}, per_label: {disk: {num: 41}}}
    tolerances: {membership: 1.0e-7}
    sampling: {radii: [0.1, 0.01], samples: 2000, eps_schedule: [1, 0.1, 0]}
    seed: 0

Only ``name``, ``dimension`` and ``constraints`` are required. Validation
errors carry the file name and line number of the offending entry.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional

import numpy as np
import yaml

from . import __version__
from .charset import build_characteristic
from .config import DEFAULT_TOLERANCES, Tolerances
from .convex_core import (DEFAULT_GRID, Affine, ConvexFunction, GridConfig, InequalitySystem,
                          MaxAffine, Quadratic, residual)
from .errors import SipstabError, SpecError
from .optimality import (ConsequenceQuery, check_stationarity_smooth, check_stationarity_upper,
                         farkas_consequence)
from .stability import (DEFAULT_EPS_SCHEDULE, DEFAULT_RADII, DEFAULT_SAMPLES, check_ssc,
                        coderivative_norm, distance_dual_detail, distance_primal, lip_bound, lip_sample)

SKIPPED_SSC = "skipped: SSC fails"


class ScenarioError(SpecError):
    """Schema violation in a scenario file, anchored to a line when known."""

    def __init__(self, message: str, source: str = "<scenario>", line: Optional[int] = None):
        self.source, self.line, self.detail = source, line, message
        where = f"{source}:{line}" if line is not None else source
        super().__init__(f"{where}: {message}")


# ---------------------------------------------------------------------------
# data model


@dataclass(frozen=True, eq=False)
class Probe:
    """A point x and parameter p at which distances and Farkas queries are evaluated."""

    x: np.ndarray
    p: np.ndarray
    queries: tuple = ()


@dataclass(frozen=True, eq=False)
class Objective:
    """Objective over (p, x).

    ``kind="smooth"``: ``phi = <w, p> + <c, x> + 1/2 <x, H x>``.
    ``kind="min_affine"``: ``phi = min_i <w_i, p> + <c_i, x> + e_i`` (concave, so
    the gradients of the pieces active at (0, xbar) are upper subgradients).
    """

    kind: str
    p_weights: np.ndarray
    c: np.ndarray
    H: Optional[np.ndarray] = None
    offsets: Optional[np.ndarray] = None

    def value(self, p, x) -> float:
        p, x = np.asarray(p, dtype=float), np.asarray(x, dtype=float)
        if self.kind == "smooth":
            v = p @ self.p_weights + x @ self.c
            return float(v + (0.5 * x @ self.H @ x if self.H is not None else 0.0))
        return float(np.min(self.p_weights @ p + self.c @ x + self.offsets))

    def gradients(self, xbar, tol: float = 1e-12) -> list:
        """(grad_p, grad_x) pairs at (0, xbar): one for smooth, one per active piece otherwise."""
        xbar = np.asarray(xbar, dtype=float)
        if self.kind == "smooth":
            gx = self.c + (self.H @ xbar if self.H is not None else 0.0)
            return [(self.p_weights.copy(), np.asarray(gx, dtype=float))]
        vals = self.c @ xbar + self.offsets
        act = np.flatnonzero(vals <= vals.min() + tol * (1.0 + abs(vals.min())))
        return [(self.p_weights[i].copy(), self.c[i].copy()) for i in act]

    def to_dict(self) -> dict:
        if self.kind == "smooth":
            d = {"kind": "smooth", "p_weights": self.p_weights.tolist(), "c": self.c.tolist()}
            if self.H is not None:
                d["H"] = self.H.tolist()
            return d
        return {"kind": "min_affine",
                "pieces": [{"p_weights": w.tolist(), "c": c.tolist(), "e": float(e)}
                           for w, c, e in zip(self.p_weights, self.c, self.offsets)]}


@dataclass(frozen=True)
class Sampling:
    radii: tuple = DEFAULT_RADII
    samples: int = DEFAULT_SAMPLES
    eps_schedule: tuple = DEFAULT_EPS_SCHEDULE
    soundness_samples: int = 1000


@dataclass(frozen=True, eq=False)
class Scenario:
    name: str
    system: InequalitySystem
    xbar: Optional[np.ndarray] = None
    probes: tuple = ()
    closure_points: Optional[np.ndarray] = None
    closure_justification: str = ""
    objective: Optional[Objective] = None
    grid_default: GridConfig = DEFAULT_GRID
    grid_per_label: dict = field(default_factory=dict)
    tolerances: Tolerances = DEFAULT_TOLERANCES
    sampling: Sampling = Sampling()
    seed: int = 0

    @property
    def n(self) -> int:
        return self.system.n

    @property
    def grids(self):
        if not self.grid_per_label:
            return self.grid_default
        return {"default": self.grid_default, **self.grid_per_label}

    def to_dict(self) -> dict:
        s = self.system
        d = {"name": self.name, "dimension": s.n}
        if s.family:
            d["family"] = s.family
        if s.truncation is not None:
            d["truncation"] = int(s.truncation)
        d["constraints"] = [{"label": lab, **f.to_dict()} for lab, f in zip(s.labels, s.functions)]
        if self.xbar is not None:
            d["xbar"] = self.xbar.tolist()
        if self.probes:
            d["probes"] = [{"x": pr.x.tolist(), "p": pr.p.tolist(),
                            "queries": [{"v": q.v.tolist(), "alpha": q.alpha} for q in pr.queries]}
                           for pr in self.probes]
        if self.closure_points is not None and len(self.closure_points):
            d["closure_points"] = {"justification": self.closure_justification,
                                   "points": self.closure_points.tolist()}
        if self.objective is not None:
            d["objective"] = self.objective.to_dict()
        d["grids"] = {"default": _grid_dict(self.grid_default)}
        if self.grid_per_label:
            d["grids"]["per_label"] = {k: _grid_dict(g) for k, g in self.grid_per_label.items()}
        d["tolerances"] = self.tolerances.as_dict()
        d["sampling"] = {"radii": list(self.sampling.radii), "samples": self.sampling.samples,
                         "eps_schedule": list(self.sampling.eps_schedule),
                         "soundness_samples": self.sampling.soundness_samples}
        d["seed"] = int(self.seed)
        return d


def _grid_dict(g: GridConfig) -> dict:
    def plain(v):
        return np.asarray(v).tolist()
    return {"lower": plain(g.lower), "upper": plain(g.upper), "num": plain(g.num)}


# ---------------------------------------------------------------------------
# YAML with line numbers


class _LineDict(dict):
    line: int = 0
    key_lines: dict


class _LineList(list):
    line: int = 0
    item_lines: list


class _Loader(yaml.SafeLoader):
    pass


def _construct_map(loader, node):
    loader.flatten_mapping(node)
    out = _LineDict()
    out.line = node.start_mark.line + 1
    out.key_lines = {}
    for k_node, v_node in node.value:
        key = loader.construct_object(k_node, deep=True)
        if not isinstance(key, (str, int, float, bool)):
            raise ScenarioError("mapping keys must be scalars", line=k_node.start_mark.line + 1)
        out[key] = loader.construct_object(v_node, deep=True)
        out.key_lines[key] = k_node.start_mark.line + 1
    return out


def _construct_seq(loader, node):
    out = _LineList(loader.construct_object(v, deep=True) for v in node.value)
    out.line = node.start_mark.line + 1
    out.item_lines = [v.start_mark.line + 1 for v in node.value]
    return out


_Loader.add_constructor(yaml.resolver.BaseResolver.DEFAULT_MAPPING_TAG, _construct_map)
_Loader.add_constructor(yaml.resolver.BaseResolver.DEFAULT_SEQUENCE_TAG, _construct_seq)


class _Ctx:
    """Validation helper that knows the source name and builds anchored errors."""

    def __init__(self, source: str):
        self.source = source

    def fail(self, msg, node=None, key=None):
        line = None
        if isinstance(node, _LineDict):
            line = node.key_lines.get(key, node.line) if key is not None else node.line
        elif isinstance(node, _LineList):
            line = node.item_lines[key] if isinstance(key, int) and key < len(node.item_lines) else node.line
        raise ScenarioError(msg, self.source, line)

    def mapping(self, node, what, parent=None, key=None):
        if not isinstance(node, dict):
            self.fail(f"{what} must be a mapping", parent if parent is not None else node, key)
        return node

    def require(self, d, key, what):
        if key not in d:
            self.fail(f"missing required field {key!r} in {what}", d)
        return d[key]

    def number(self, d, key, what, default=None):
        if key not in d:
            if default is None:
                self.fail(f"missing required field {key!r} in {what}", d)
            return default
        v = d[key]
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            self.fail(f"{what}.{key} must be a finite number", d, key)
        return float(v)

    def integer(self, d, key, what, default=None):
        if key not in d:
            return default
        v = d[key]
        if isinstance(v, bool) or not isinstance(v, int):
            self.fail(f"{what}.{key} must be an integer", d, key)
        return int(v)

    def vector(self, d, key, what, n=None, default=None):
        if key not in d:
            if default is not None:
                return default
            self.fail(f"missing required field {key!r} in {what}", d)
        v = d[key]
        if isinstance(v, (int, float)) and not isinstance(v, bool):
            v = [v]
        if not isinstance(v, list) or not all(isinstance(e, (int, float)) and not isinstance(e, bool)
                                              for e in v):
            self.fail(f"{what}.{key} must be a list of numbers", d, key)
        arr = np.asarray(v, dtype=float)
        if not np.all(np.isfinite(arr)):
            self.fail(f"{what}.{key} must be finite", d, key)
        if n is not None and arr.size != n:
            self.fail(f"{what}.{key} has length {arr.size}, expected {n}", d, key)
        return arr

    def matrix(self, d, key, what, shape=None):
        v = self.require(d, key, what)
        if not isinstance(v, list) or not all(isinstance(r, list) for r in v):
            self.fail(f"{what}.{key} must be a list of rows", d, key)
        try:
            arr = np.asarray(v, dtype=float)
        except (TypeError, ValueError):
            self.fail(f"{what}.{key} must be a numeric matrix", d, key)
        if arr.ndim != 2 or (shape is not None and arr.shape != shape):
            self.fail(f"{what}.{key} has shape {arr.shape}, expected {shape}", d, key)
        if not np.all(np.isfinite(arr)):
            self.fail(f"{what}.{key} must be finite", d, key)
        return arr

    def check_keys(self, d, allowed, what):
        for k in d:
            if k not in allowed:
                self.fail(f"unknown field {k!r} in {what}", d, k)


_TOP_KEYS = {"name", "dimension", "family", "truncation", "constraints", "xbar", "probes",
             "closure_points", "objective", "grids", "tolerances", "sampling", "seed"}


def _parse_function(ctx: _Ctx, c, n, what) -> ConvexFunction:
    kind = ctx.require(c, "kind", what)
    try:
        if kind == "affine":
            ctx.check_keys(c, {"label", "kind", "a", "b"}, what)
            return Affine(ctx.vector(c, "a", what, n), ctx.number(c, "b", what))
        if kind == "quadratic":
            ctx.check_keys(c, {"label", "kind", "Q", "c", "d"}, what)
            return Quadratic(ctx.matrix(c, "Q", what, (n, n)), ctx.vector(c, "c", what, n, np.zeros(n)),
                             ctx.number(c, "d", what, 0.0))
        if kind == "max_affine":
            ctx.check_keys(c, {"label", "kind", "pieces"}, what)
            pieces = ctx.require(c, "pieces", what)
            if not isinstance(pieces, list) or not pieces:
                ctx.fail(f"{what}.pieces must be a nonempty list", c, "pieces")
            rows = []
            for j, pc in enumerate(pieces):
                ctx.mapping(pc, f"{what}.pieces[{j}]", pieces, j)
                rows.append((ctx.vector(pc, "a", f"{what}.pieces[{j}]", n),
                             ctx.number(pc, "b", f"{what}.pieces[{j}]")))
            return MaxAffine.from_pieces(rows)
    except ScenarioError:
        raise
    except SpecError as exc:
        ctx.fail(f"{what}: {exc}", c)
    ctx.fail(f"{what}.kind must be one of affine, quadratic, max_affine (got {kind!r})", c, "kind")


def _parse_grid(ctx: _Ctx, g, what, base: GridConfig = DEFAULT_GRID) -> GridConfig:
    ctx.mapping(g, what)
    ctx.check_keys(g, {"lower", "upper", "num"}, what)

    def field_(key, cast):
        if key not in g:
            return getattr(base, key)
        v = g[key]
        vals = v if isinstance(v, list) else [v]
        if not all(isinstance(e, (int, float)) and not isinstance(e, bool) for e in vals):
            ctx.fail(f"{what}.{key} must be numeric", g, key)
        if cast is int and not all(isinstance(e, int) and e >= 1 for e in vals):
            ctx.fail(f"{what}.{key} must be positive integers", g, key)
        return [cast(e) for e in v] if isinstance(v, list) else cast(v)

    grid = GridConfig(field_("lower", float), field_("upper", float), field_("num", int))
    if np.any(np.asarray(grid.upper) < np.asarray(grid.lower)):
        ctx.fail(f"{what}: upper bound below lower bound", g)
    return grid


def _parse_parameter(ctx: _Ctx, pr, what, labels):
    if "p" not in pr:
        return np.zeros(len(labels))
    v = pr["p"]
    if isinstance(v, dict):
        out = np.zeros(len(labels))
        for k, val in v.items():
            if str(k) not in labels:
                ctx.fail(f"{what}.p names unknown label {k!r}", v, k)
            if isinstance(val, bool) or not isinstance(val, (int, float)):
                ctx.fail(f"{what}.p[{k!r}] must be a number", v, k)
            out[labels.index(str(k))] = float(val)
        return out
    return ctx.vector(pr, "p", what, len(labels))


def scenario_from_dict(data, source: str = "<scenario>") -> Scenario:
    ctx = _Ctx(source)
    d = ctx.mapping(data, "scenario")
    ctx.check_keys(d, _TOP_KEYS, "scenario")
    name = ctx.require(d, "name", "scenario")
    if not isinstance(name, str) or not name:
        ctx.fail("name must be a nonempty string", d, "name")
    n = ctx.integer(d, "dimension", "scenario")
    if n is None or n < 1:
        ctx.fail("dimension must be a positive integer", d, "dimension" if "dimension" in d else None)
    cons = ctx.require(d, "constraints", "scenario")
    if not isinstance(cons, list) or not cons:
        ctx.fail("constraints must be a nonempty list", d, "constraints")
    funcs, labels = [], []
    for i, c in enumerate(cons):
        what = f"constraints[{i}]"
        ctx.mapping(c, what, cons, i)
        label = str(c.get("label", i))
        if label in labels:
            ctx.fail(f"duplicate constraint label {label!r}", c, "label")
        labels.append(label)
        funcs.append(_parse_function(ctx, c, n, what))
    truncation = ctx.integer(d, "truncation", "scenario")
    family = d.get("family")
    if family is not None and not isinstance(family, str):
        ctx.fail("family must be a string", d, "family")
    system = InequalitySystem(funcs, labels, truncation, family)

    xbar = ctx.vector(d, "xbar", "scenario", n) if "xbar" in d else None

    probes = []
    for i, pr in enumerate(d.get("probes") or []):
        what = f"probes[{i}]"
        ctx.mapping(pr, what, d["probes"], i)
        ctx.check_keys(pr, {"x", "p", "queries"}, what)
        x = ctx.vector(pr, "x", what, n)
        p = _parse_parameter(ctx, pr, what, labels)
        queries = []
        for j, q in enumerate(pr.get("queries") or []):
            qw = f"{what}.queries[{j}]"
            ctx.mapping(q, qw, pr["queries"], j)
            ctx.check_keys(q, {"v", "alpha"}, qw)
            queries.append(ConsequenceQuery(ctx.vector(q, "v", qw, n), ctx.number(q, "alpha", qw)))
        probes.append(Probe(x, p, tuple(queries)))

    closure, just = None, ""
    if "closure_points" in d:
        cp = ctx.mapping(d["closure_points"], "closure_points", d, "closure_points")
        ctx.check_keys(cp, {"points", "justification"}, "closure_points")
        just = cp.get("justification", "")
        if not isinstance(just, str) or not just.strip():
            ctx.fail("closure_points need a nonempty justification", cp)
        closure = ctx.matrix(cp, "points", "closure_points")
        if closure.shape[1] != n + 1:
            ctx.fail(f"closure points must have {n + 1} coordinates", cp, "points")

    objective = None
    if "objective" in d:
        o = ctx.mapping(d["objective"], "objective", d, "objective")
        kind = o.get("kind", "smooth")
        if kind == "smooth":
            ctx.check_keys(o, {"kind", "p_weights", "c", "H"}, "objective")
            H = ctx.matrix(o, "H", "objective", (n, n)) if "H" in o else None
            objective = Objective("smooth", ctx.vector(o, "p_weights", "objective", len(labels)),
                                  ctx.vector(o, "c", "objective", n, np.zeros(n)), H)
        elif kind == "min_affine":
            ctx.check_keys(o, {"kind", "pieces"}, "objective")
            pcs = ctx.require(o, "pieces", "objective")
            if not isinstance(pcs, list) or not pcs:
                ctx.fail("objective.pieces must be a nonempty list", o, "pieces")
            W, C, E = [], [], []
            for j, pc in enumerate(pcs):
                pw = f"objective.pieces[{j}]"
                ctx.mapping(pc, pw, pcs, j)
                W.append(ctx.vector(pc, "p_weights", pw, len(labels)))
                C.append(ctx.vector(pc, "c", pw, n, np.zeros(n)))
                E.append(ctx.number(pc, "e", pw, 0.0))
            objective = Objective("min_affine", np.array(W), np.array(C), None, np.array(E))
        else:
            ctx.fail("objective.kind must be smooth or min_affine", o, "kind")

    grid_default, per_label = DEFAULT_GRID, {}
    if "grids" in d:
        g = ctx.mapping(d["grids"], "grids", d, "grids")
        ctx.check_keys(g, {"default", "per_label"}, "grids")
        if "default" in g:
            grid_default = _parse_grid(ctx, g["default"], "grids.default")
        for lab, gg in (g.get("per_label") or {}).items():
            if str(lab) not in labels:
                ctx.fail(f"grids.per_label names unknown label {lab!r}", g["per_label"], lab)
            per_label[str(lab)] = _parse_grid(ctx, gg, f"grids.per_label.{lab}", grid_default)

    tol = DEFAULT_TOLERANCES
    if "tolerances" in d:
        t = ctx.mapping(d["tolerances"], "tolerances", d, "tolerances")
        ctx.check_keys(t, set(tol.as_dict()), "tolerances")
        vals = {k: ctx.number(t, k, "tolerances") for k in t}
        for k, v in vals.items():
            if v <= 0:
                ctx.fail(f"tolerances.{k} must be positive", t, k)
        tol = tol.updated(**vals)

    sampling = Sampling()
    if "sampling" in d:
        s = ctx.mapping(d["sampling"], "sampling", d, "sampling")
        ctx.check_keys(s, {"radii", "samples", "eps_schedule", "soundness_samples"}, "sampling")
        radii = tuple(ctx.vector(s, "radii", "sampling", default=np.array(DEFAULT_RADII)).tolist())
        if any(r <= 0 for r in radii):
            ctx.fail("sampling.radii must be positive", s, "radii")
        eps = tuple(ctx.vector(s, "eps_schedule", "sampling",
                               default=np.array(DEFAULT_EPS_SCHEDULE)).tolist())
        if any(e < 0 for e in eps):
            ctx.fail("sampling.eps_schedule must be nonnegative", s, "eps_schedule")
        samples = ctx.integer(s, "samples", "sampling", DEFAULT_SAMPLES)
        sound = ctx.integer(s, "soundness_samples", "sampling", 1000)
        if samples < 1 or sound < 0:
            ctx.fail("sampling counts must be positive", s)
        sampling = Sampling(radii, samples, eps, sound)

    seed = ctx.integer(d, "seed", "scenario", 0)
    return Scenario(name, system, xbar, tuple(probes), closure, just, objective, grid_default,
                    per_label, tol, sampling, seed)


def load_scenario(path) -> Scenario:
    """Read and validate a scenario file, or a builtin given as ``builtin:<name>``."""
    path = str(path)
    if path.startswith("builtin:"):
        return builtin(path[len("builtin:"):])
    if not os.path.exists(path):
        raise FileNotFoundError(f"scenario file not found: {path}")
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    return loads_scenario(text, path)


def loads_scenario(text: str, source: str = "<scenario>") -> Scenario:
    try:
        data = yaml.load(text, Loader=_Loader)
    except yaml.MarkedYAMLError as exc:
        line = exc.problem_mark.line + 1 if exc.problem_mark is not None else None
        raise ScenarioError(f"YAML syntax error: {exc.problem}", source, line) from None
    except ScenarioError as exc:
        raise ScenarioError(exc.detail, source, exc.line) from None
    if data is None:
        raise ScenarioError("empty scenario file", source)
    return scenario_from_dict(data, source)


class _Dumper(yaml.SafeDumper):
    pass


def _represent_float(dumper, value):
    if math.isnan(value):
        text = ".nan"
    elif math.isinf(value):
        text = ".inf" if value > 0 else "-.inf"
    else:
        text = "%.17g" % value
        if "." not in text and "n" not in text:
            mant, _, exp = text.partition("e")
            text = mant + ".0" + ("e" + exp if exp else "")
    return dumper.represent_scalar("tag:yaml.org,2002:float", text)


_Dumper.add_representer(float, _represent_float)


def dumps_scenario(s: Scenario) -> str:
    return yaml.dump(s.to_dict(), Dumper=_Dumper, sort_keys=False, default_flow_style=None, width=100)


def save_scenario(s: Scenario, path) -> None:
    Path(path).write_text(dumps_scenario(s), encoding="utf-8")


def scenario_hash(s: Scenario) -> str:
    return hashlib.sha256(dumps_scenario(s).encode("utf-8")).hexdigest()


# ---------------------------------------------------------------------------
# builtins


def example1_countable(N: int = 10, with_closure: bool = False) -> Scenario:
    """x1 + x2 <= p_0 and (-1)^t t x1 <= 1 + p_t for t = 1..N, at xbar = 0.

    With ``with_closure`` the points (a, 1, 0), a = -2..2, are declared: mixing
    (1, 1, 0) with weight c/t on the row ((-1)^t t, 0, 1) gives
    (1 - c/t + c (-1)^t, 1 - c/t, c/t), which tends to (1 +- c, 1, 0) as t grows.
    """
    if N < 1:
        raise SpecError("truncation N must be at least 1")
    funcs = [Affine([1.0, 1.0], 0.0)] + [Affine([(-1.0) ** t * t, 0.0], 1.0) for t in range(1, N + 1)]
    labels = [str(t) for t in range(N + 1)]
    system = InequalitySystem(funcs, labels, N, "t = 0, 1, 2, ... (countable)")
    closure, just = None, ""
    if with_closure:
        closure = np.array([[a, 1.0, 0.0] for a in range(-2, 3)], dtype=float)
        just = ("Limits of (1 - c/t)(1, 1, 0) + (c/t)((-1)^t t, 0, 1) as t grows through even or "
                "odd values give (1 + c, 1, 0) and (1 - c, 1, 0) for every c >= 0.")
    probes = (
        Probe(np.array([0.5, 0.5]), np.zeros(N + 1), (ConsequenceQuery([1.0, 1.0], 0.0),
                                                       ConsequenceQuery([1.0, 1.0], -0.5))),
        Probe(np.array([1.0, -0.2]), _unit(N + 1, 0, 0.1), (ConsequenceQuery([1.0, 1.0], 0.1),)),
        Probe(np.array([0.0, -1.0]), np.zeros(N + 1), ()),
    )
    return Scenario(f"example1_countable_N{N}" + ("_closure" if with_closure else ""), system,
                    np.zeros(2), probes, closure, just, seed=0)


def example2_unbounded(M: int = 10) -> Scenario:
    """t x <= 1/t + p_t for t = 1..M in one dimension, at xbar = 0."""
    if M < 1:
        raise SpecError("truncation M must be at least 1")
    funcs = [Affine([float(t)], 1.0 / t) for t in range(1, M + 1)]
    system = InequalitySystem(funcs, [str(t) for t in range(1, M + 1)], M, "t in [1, infinity)")
    probes = (Probe(np.array([1.0]), np.zeros(M), (ConsequenceQuery([1.0], 1.0 / M ** 2),)),
              Probe(np.array([0.0]), np.zeros(M), ()),
              Probe(np.array([0.5]), np.full(M, 0.01), ()))
    sampling = Sampling(radii=(0.4 / M, 0.1 / M, 0.01 / M))
    return Scenario(f"example2_unbounded_M{M}", system, np.zeros(1), probes, sampling=sampling)


def parabola() -> Scenario:
    """x^2 - 1 <= p, reference point xbar = 1; the objective p - 2x is minimized there."""
    system = InequalitySystem([Quadratic([[2.0]], [0.0], -1.0)], ["0"])
    probes = (Probe(np.array([2.0]), np.zeros(1), (ConsequenceQuery([1.0], 1.0),)),
              Probe(np.array([0.0]), np.zeros(1), ()),
              Probe(np.array([-3.0]), np.array([0.21]), ()))
    obj = Objective("smooth", np.array([1.0]), np.array([-2.0]))
    return Scenario("parabola", system, np.ones(1), probes, objective=obj,
                    sampling=Sampling(radii=(1e-2, 1e-4, 1e-6)))


def parabola_raw() -> Scenario:
    """x^2 <= p at xbar = 0: no strictly feasible point at p = 0."""
    system = InequalitySystem([Quadratic([[2.0]], [0.0], 0.0)], ["0"])
    probes = (Probe(np.array([1.0]), np.zeros(1), ()),)
    return Scenario("parabola_raw", system, np.zeros(1), probes)


def _unit(size, i, value):
    v = np.zeros(size)
    v[i] = value
    return v


BUILTINS: dict = {
    "example1_countable": example1_countable,
    "example2_unbounded": example2_unbounded,
    "parabola": parabola,
    "parabola_raw": parabola_raw,
}


def builtin(name: str, **kwargs) -> Scenario:
    try:
        factory: Callable = BUILTINS[name]
    except KeyError:
        raise SpecError(f"unknown builtin {name!r}; choose from {', '.join(sorted(BUILTINS))}") from None
    return factory(**kwargs)


# ---------------------------------------------------------------------------
# running and reporting


@dataclass
class Report:
    """Everything computed for one scenario; ``to_dict`` is the serialized form."""

    scenario: str
    scenario_hash: str
    version: str
    tolerances: dict
    ssc: dict
    probes: list
    modulus: Optional[dict]
    coderivative_norm: object
    lip_trend: list
    stationarity: Optional[dict]
    cloud_csv: str
    timings: dict = field(default_factory=dict)

    def to_dict(self, include_timings: bool = False) -> dict:
        d = {"scenario": self.scenario, "scenario_hash": self.scenario_hash, "version": self.version,
             "tolerances": self.tolerances, "ssc": self.ssc, "probes": self.probes,
             "modulus": self.modulus, "coderivative_norm": self.coderivative_norm,
             "lip_trend": self.lip_trend, "stationarity": self.stationarity}
        if include_timings:
            d["timings"] = self.timings
        return d


def _num(v):
    """JSON-safe number: non-finite floats become strings."""
    v = float(v)
    if math.isfinite(v):
        return v
    return "inf" if v > 0 else ("-inf" if v < 0 else "nan")


def _arr(a):
    return None if a is None else [_num(v) for v in np.asarray(a, dtype=float).reshape(-1)]


def _error_text(exc: Exception) -> str:
    return f"error: {type(exc).__name__}: {exc}"


def run_scenario(s: Scenario, threads: int = 1, seed: Optional[int] = None) -> Report:
    """Run every analysis the scenario supports; per-probe failures are recorded, not raised."""
    seed = s.seed if seed is None else seed
    tol = s.tolerances
    timings = {}
    system = s.system
    t0 = time.perf_counter()
    ssc = check_ssc(system, s.grids, s.closure_points, s.closure_justification, tol)
    timings["ssc"] = time.perf_counter() - t0
    ssc_d = {"satisfied": ssc.satisfied, "witness": _arr(ssc.witness), "slack": _num(ssc.slack),
             "best_value": _num(ssc.best_value), "dual_check": _num(ssc.dual_check),
             "dual_satisfied": ssc.dual_satisfied, "routes_agree": ssc.routes_agree,
             "diagnostic": ssc.diagnostic, "tolerance": tol.feasibility}

    t0 = time.perf_counter()
    probes = []
    for i, pr in enumerate(s.probes):
        entry = {"index": i, "x": _arr(pr.x), "p": _arr(pr.p),
                 "residual": _num(residual(system, pr.p, pr.x))}
        try:
            entry["primal"] = _num(distance_primal(system, pr.p, pr.x, tol))
        except SipstabError as exc:
            entry["primal"] = _error_text(exc)
        if not ssc.satisfied:
            entry["dual"] = entry["gap"] = SKIPPED_SSC
        else:
            try:
                dd = distance_dual_detail(system, pr.p, pr.x, s.grids, tol)
                entry.update(dual=_num(dd.value), gap=_num(dd.gap), residual_gap=_num(dd.residual_gap),
                             attained=dd.attained)
            except SipstabError as exc:
                entry["dual"] = entry["gap"] = _error_text(exc)
        entry["tolerance"] = tol.primal
        qs = []
        for q in pr.queries:
            qd = {"v": _arr(q.v), "alpha": _num(q.alpha)}
            try:
                fr = farkas_consequence(system, pr.p, q, s.grids, tolerances=tol,
                                        soundness_samples=s.sampling.soundness_samples, seed=seed)
                qd.update(holds=fr.holds, residual=_num(fr.residual), tolerance=tol.membership)
                if fr.soundness is not None:
                    qd["soundness"] = {"points": fr.soundness.points,
                                       "worst_excess": _num(fr.soundness.worst_excess),
                                       "passed": fr.soundness.passed}
            except SipstabError as exc:
                qd["holds"] = _error_text(exc)
            qs.append(qd)
        entry["queries"] = qs
        probes.append(entry)
    timings["probes"] = time.perf_counter() - t0

    modulus, cnorm, trend, stat = None, None, [], None
    if s.xbar is not None:
        if not ssc.satisfied:
            modulus, cnorm, trend = SKIPPED_SSC, SKIPPED_SSC, SKIPPED_SSC
            stat = SKIPPED_SSC if s.objective is not None else None
        else:
            t0 = time.perf_counter()
            try:
                m = lip_bound(system, s.xbar, s.grids, s.sampling.eps_schedule, s.closure_points,
                              s.closure_justification, tol)
                modulus = {"lip_value": _num(m.lip_value), "mode": m.mode, "attained": m.attained,
                           "u_star": _arr(m.u_star), "support": list(m.support),
                           "weights": None if m.weights is None else
                           {str(i): _num(m.weights.lam[i]) for i in m.weights.support},
                           "reconstruction_error": _num(m.reconstruction_error),
                           "sup_value": _num(m.sup_value),
                           "eps_diagnostics": [{"epsilon": _num(e.epsilon), "value": _num(e.value),
                                                "active": e.active} for e in m.eps_diagnostics],
                           "tolerance": tol.feasibility}
                cnorm = _num(coderivative_norm(system, s.xbar, s.grids, s.closure_points,
                                               s.closure_justification, tol))
            except SipstabError as exc:
                modulus = cnorm = _error_text(exc)
            timings["modulus"] = time.perf_counter() - t0
            t0 = time.perf_counter()
            try:
                rows = lip_sample(system, s.xbar, s.sampling.radii, s.sampling.samples, seed, threads, tol)
                trend = [{"radius": _num(r.radius), "max_ratio": _num(r.max_ratio), "samples": r.samples,
                          "nonzero": r.nonzero, "infinite": r.infinite, "unresolved": r.unresolved}
                         for r in rows]
            except SipstabError as exc:
                trend = _error_text(exc)
            timings["lip_sample"] = time.perf_counter() - t0
            if s.objective is not None:
                t0 = time.perf_counter()
                stat = _stationarity(s, tol)
                timings["stationarity"] = time.perf_counter() - t0

    cloud = build_characteristic(system, None, s.grids, s.closure_points, s.closure_justification,
                                 extra_points=s.xbar)
    return Report(s.name, scenario_hash(s), __version__, tol.as_dict(), ssc_d, probes, modulus,
                  cnorm, trend, stat, cloud.to_csv(), timings)


def _stationarity(s: Scenario, tol: Tolerances):
    def cert(c):
        return {"residual": _num(c.residual), "status": c.status, "multipliers": _arr(c.multipliers),
                "grad_p": _arr(c.grad_p), "grad_x": _arr(c.grad_x)}
    try:
        grads = s.objective.gradients(s.xbar)
        if s.objective.kind == "smooth":
            c = check_stationarity_smooth(s.system, s.xbar, grads[0][0], grads[0][1], s.grids, tol)
            return {"kind": "smooth", "certificates": [cert(c)], "all_satisfied": c.satisfied,
                    "vacuous": False, "tolerance": tol.membership, "violation": tol.violation}
        up = check_stationarity_upper(s.system, s.xbar, grads, s.grids, tol)
        return {"kind": "upper", "certificates": [cert(c) for c in up.certificates],
                "all_satisfied": up.all_satisfied, "vacuous": up.vacuous,
                "tolerance": tol.membership, "violation": tol.violation}
    except SipstabError as exc:
        return _error_text(exc)


FORMATS = ("structured-text", "csv-bundle")


def report_text(r: Report, include_timings: bool = False) -> str:
    return json.dumps(r.to_dict(include_timings), indent=2, sort_keys=True, allow_nan=False) + "\n"


def _csv(rows, header) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(v) if isinstance(v, float) else v for v in row])
    return out.getvalue()


def report_bundle(r: Report) -> dict:
    """File name to content mapping of the CSV bundle."""
    files = {"cloud.csv": r.cloud_csv}
    eps = r.modulus.get("eps_diagnostics", []) if isinstance(r.modulus, dict) else []
    files["eps_diagnostics.csv"] = _csv([(e["epsilon"], e["value"], e["active"]) for e in eps],
                                        ["epsilon", "value", "active_indices"])
    trend = r.lip_trend if isinstance(r.lip_trend, list) else []
    files["lip_trend.csv"] = _csv([(t["radius"], t["max_ratio"], t["samples"], t["nonzero"], t["infinite"],
                                    t["unresolved"]) for t in trend],
                                  ["radius", "max_ratio", "samples", "nonzero", "infinite", "unresolved"])
    files["distances.csv"] = _csv([(p["index"], p["residual"], p["primal"], p.get("dual"), p.get("gap"))
                                   for p in r.probes], ["probe", "residual", "primal", "dual", "gap"])
    summary = [("scenario", r.scenario), ("scenario_hash", r.scenario_hash), ("version", r.version),
               ("ssc_satisfied", r.ssc["satisfied"]), ("ssc_dual_check", r.ssc["dual_check"])]
    if isinstance(r.modulus, dict):
        summary += [("lip_value", r.modulus["lip_value"]), ("mode", r.modulus["mode"])]
    else:
        summary += [("lip_value", r.modulus)]
    summary += [("coderivative_norm", r.coderivative_norm)]
    files["summary.csv"] = _csv(summary, ["key", "value"])
    return files


def write_report(r: Report, path, fmt: str = "structured-text", include_timings: bool = False) -> None:
    """Serialize a report: one JSON file, or a directory of CSV files for ``csv-bundle``."""
    if fmt == "structured-text":
        Path(path).write_text(report_text(r, include_timings), encoding="utf-8")
    elif fmt == "csv-bundle":
        out = Path(path)
        out.mkdir(parents=True, exist_ok=True)
        for name, text in report_bundle(r).items():
            (out / name).write_text(text, encoding="utf-8")
    else:
        raise ValueError(f"unknown report format {fmt!r}; choose from {', '.join(FORMATS)}")


def with_overrides(s: Scenario, tolerances: Optional[dict] = None, grid: Optional[GridConfig] = None,
                   seed: Optional[int] = None, eps_schedule=None, radii=None, samples=None) -> Scenario:
    """Copy of a scenario with command-line style overrides applied."""
    changes = {}
    if tolerances:
        changes["tolerances"] = s.tolerances.updated(**tolerances)
    if grid is not None:
        changes["grid_default"] = grid
    if seed is not None:
        changes["seed"] = int(seed)
    samp = s.sampling
    if eps_schedule is not None:
        samp = replace(samp, eps_schedule=tuple(float(e) for e in eps_schedule))
    if radii is not None:
        samp = replace(samp, radii=tuple(float(r) for r in radii))
    if samples is not None:
        samp = replace(samp, samples=int(samples))
    changes["sampling"] = samp
    return replace(s, **changes)
