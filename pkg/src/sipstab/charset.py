"""Characteristic point clouds of a perturbed system and epsilon-active restrictions.

The cloud of ``sigma(p)`` collects, for every index t and sampled conjugate
point u, the pair ``(u, f_t*(u) + p_t)``; its convex hull is the
characteristic set and, with the vertical ray ``(0, 1)`` added, the
hypographical set. Linear indices contribute ``(a_t, b_t + p_t)``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .convex_core import InequalitySystem, residual
from .errors import InfeasiblePointError, SpecError
from .linearize import embed_parameter, linearize_system

FEASIBILITY_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class CharacteristicCloud:
    """Finite generator description of the characteristic set.

    Attributes
    ----------
    points : ndarray, shape (m, n + 1)
        Rows ``(u, alpha)``.
    origin : ndarray of int, shape (m,)
        Position in the system of the index each row came from.
    labels : tuple of str
        Index labels of the system.
    closure_points : ndarray, shape (c, n + 1)
        User-declared points of the weak* closure; empty when none.
    closure_justification : str
    """

    points: np.ndarray
    origin: np.ndarray
    labels: tuple
    closure_points: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    closure_justification: str = ""

    def __post_init__(self):
        n1 = self.points.shape[1]
        cp = np.asarray(self.closure_points, dtype=float)
        cp = cp.reshape(-1, n1) if cp.size else np.zeros((0, n1))
        object.__setattr__(self, "closure_points", cp)
        if cp.shape[0] and not self.closure_justification.strip():
            raise SpecError("closure points need a justification")

    @property
    def n(self) -> int:
        return self.points.shape[1] - 1

    @property
    def epi_ray(self) -> np.ndarray:
        ray = np.zeros(self.n + 1)
        ray[-1] = 1.0
        return ray

    def __len__(self) -> int:
        return self.points.shape[0]

    def generators(self, include_closure: bool = True) -> np.ndarray:
        if include_closure and self.closure_points.shape[0]:
            return np.vstack([self.points, self.closure_points])
        return self.points

    def generator_labels(self, include_closure: bool = True) -> list:
        out = [self.labels[t] for t in self.origin]
        if include_closure:
            out += ["closure"] * self.closure_points.shape[0]
        return out

    def restrict(self, indices) -> "CharacteristicCloud":
        """Cloud keeping only rows whose origin position is in ``indices`` (closure points dropped)."""
        mask = np.isin(self.origin, np.asarray(list(indices), dtype=int))
        return CharacteristicCloud(self.points[mask], self.origin[mask], self.labels)

    def to_csv(self, handle=None, include_closure: bool = True) -> Optional[str]:
        """Write ``origin, u_1..u_n, alpha`` rows; returns the text when no handle is given."""
        out = io.StringIO() if handle is None else handle
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["origin"] + [f"u{i + 1}" for i in range(self.n)] + ["alpha"])
        for lab, row in zip(self.generator_labels(include_closure), self.generators(include_closure)):
            w.writerow([lab] + [repr(float(v)) for v in row])
        return out.getvalue() if handle is None else None


def build_characteristic(system: InequalitySystem, p=None, grids=None, closure_points=None,
                         justification: str = "", extra_points=None) -> CharacteristicCloud:
    """Sampled characteristic cloud of ``sigma(p)``.

    Parameters
    ----------
    system : InequalitySystem
    p : parameter, optional
        Defaults to the nominal parameter 0.
    grids : None, GridConfig or mapping
        Conjugate-graph sampling grids.
    closure_points : array_like, shape (c, n + 1), optional
        Declared extra points of the closure, with ``justification`` text.
    extra_points : array_like, optional
        Points x at which quadratic constraints are additionally linearized.
    """
    p = system.parameter(p)
    lin = linearize_system(system, grids, extra_points)
    alpha = lin.b + embed_parameter(p, lin).values
    pts = np.column_stack([lin.A, alpha])
    cp = np.zeros((0, system.n + 1)) if closure_points is None else \
        np.asarray(closure_points, dtype=float).reshape(-1, system.n + 1)
    return CharacteristicCloud(pts, lin.origin, tuple(system.labels), cp, justification or "")


@dataclass(frozen=True)
class ActiveIndexSet:
    """Indices t with ``f_t(xbar) >= -epsilon``, stored as positions and labels."""

    epsilon: float
    indices: tuple
    labels: tuple


def check_feasible(system: InequalitySystem, xbar, tol: float = FEASIBILITY_TOL) -> np.ndarray:
    xbar = np.asarray(xbar, dtype=float).reshape(-1)
    r = float(residual(system, None, xbar))
    if r > tol:
        raise InfeasiblePointError(f"reference point violates the nominal system by {r:.3g}")
    return xbar


def active_indices(system: InequalitySystem, xbar, epsilon: float) -> ActiveIndexSet:
    if not (epsilon >= 0):
        raise ValueError("epsilon must be nonnegative")
    xbar = check_feasible(system, xbar)
    vals = system.values(xbar)
    idx = tuple(int(i) for i in np.flatnonzero(vals >= -epsilon)) if math.isfinite(epsilon) \
        else tuple(range(len(system)))
    return ActiveIndexSet(float(epsilon), idx, tuple(system.labels[i] for i in idx))


def epsilon_active_cloud(system: InequalitySystem, xbar, epsilon: float, grids=None,
                         extra_points=None) -> CharacteristicCloud:
    """Nominal cloud restricted to rows whose origin is epsilon-active at ``xbar``."""
    act = active_indices(system, xbar, epsilon)
    cloud = build_characteristic(system, None, grids, extra_points=extra_points)
    return cloud.restrict(act.indices)
