"""Primal-side solvers: strict-feasibility search and Euclidean projection onto F(p).

Every constraint is expanded into "atoms" ``1/2 <y, Q y> + <c, y> + d <= 0``
(affine constraints and max-affine pieces have Q = 0), so that one code path
handles all function classes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog, minimize

from .convex_core import Affine, InequalitySystem, MaxAffine, Quadratic
from .errors import InfeasibleSystemError
from .minnorm import least_distance

PHASE_ONE_FLOOR = -1.0


@dataclass(frozen=True, eq=False)
class Atoms:
    Q: np.ndarray  # (K, n, n)
    c: np.ndarray  # (K, n)
    d: np.ndarray  # (K,)
    origin: np.ndarray  # (K,)
    polyhedral: bool

    def values(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        quad = 0.5 * np.einsum("...i,kij,...j->...k", y, self.Q, y) if not self.polyhedral else 0.0
        return quad + y @ self.c.T + self.d

    def jacobian(self, y) -> np.ndarray:
        if self.polyhedral:
            return self.c.copy()
        return np.einsum("kij,j->ki", self.Q, y) + self.c


def atoms(system: InequalitySystem, p) -> Atoms:
    p = system.parameter(p)
    n = system.n
    Qs, cs, ds, org = [], [], [], []
    for t, (f, pt) in enumerate(zip(system.functions, p)):
        if isinstance(f, Affine):
            Qs.append(np.zeros((n, n)))
            cs.append(f.a)
            ds.append(-f.b - pt)
            org.append(t)
        elif isinstance(f, Quadratic):
            Qs.append(f.Q)
            cs.append(f.c)
            ds.append(f.d - pt)
            org.append(t)
        elif isinstance(f, MaxAffine):
            for a, b in zip(f.A, f.b):
                Qs.append(np.zeros((n, n)))
                cs.append(a)
                ds.append(-b - pt)
                org.append(t)
        else:
            raise TypeError(f"unsupported function {type(f).__name__}")
    return Atoms(np.array(Qs), np.array(cs), np.array(ds), np.array(org), system.is_polyhedral)


def phase_one(system: InequalitySystem, p=None, x0=None):
    """Point minimizing ``max_t f_t(x) - p_t`` with the objective floored at -1.

    Returns
    -------
    x : ndarray
    value : float
        ``max_t f_t(x) - p_t`` at the returned point.
    """
    at = atoms(system, p)
    n = system.n
    if at.polyhedral:
        K = at.c.shape[0]
        A_ub = np.column_stack([at.c, -np.ones(K)])
        cost = np.zeros(n + 1)
        cost[-1] = 1.0
        bounds = [(None, None)] * n + [(PHASE_ONE_FLOOR, None)]
        res = linprog(cost, A_ub=A_ub, b_ub=-at.d, bounds=bounds, method="highs")
        if res.status != 0:
            raise RuntimeError(f"phase-one LP failed: {res.message}")
        x = res.x[:n]
        return x, float(system.max_value(x, p))

    x0 = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float)
    best_x, best_v = x0, float(system.max_value(x0, p))
    starts = [x0] if not np.any(x0) else [x0, np.zeros(n)]
    for start in starts:
        z0 = np.concatenate([start, [max(at.values(start).max(), PHASE_ONE_FLOOR)]])
        cons = [{"type": "ineq",
                 "fun": lambda z: z[-1] - at.values(z[:-1]),
                 "jac": lambda z: np.column_stack([-at.jacobian(z[:-1]), np.ones(len(at.d))])}]
        res = minimize(lambda z: z[-1], z0, jac=lambda z: np.eye(n + 1)[-1],
                       constraints=cons, bounds=[(None, None)] * n + [(PHASE_ONE_FLOOR, None)],
                       method="SLSQP", options={"ftol": 1e-14, "maxiter": 500})
        x = res.x[:n]
        v = float(system.max_value(x, p))
        if v < best_v:
            best_x, best_v = x, v
    return best_x, best_v


def _interval(system: InequalitySystem, p):
    """Feasible interval [lo, hi] of a one-dimensional system (raises when empty)."""
    at = atoms(system, p)
    lo, hi = -math.inf, math.inf
    for Q, c, d in zip(at.Q[:, 0, 0], at.c[:, 0], at.d):
        # 1/2 Q y^2 + c y + d <= 0
        if Q > 0:
            disc = c * c - 2.0 * Q * d
            if disc < 0:
                raise InfeasibleSystemError("a quadratic constraint has no feasible point")
            sq = math.sqrt(disc)
            # numerically stable roots
            q = -0.5 * (c + math.copysign(sq, c))
            r1 = q / (0.5 * Q)
            r2 = d / q if q != 0 else -r1
            a, b = min(r1, r2), max(r1, r2)
        elif c > 0:
            a, b = -math.inf, -d / c
        elif c < 0:
            a, b = -d / c, math.inf
        else:
            if d > 0:
                raise InfeasibleSystemError("a constant constraint is violated")
            continue
        lo, hi = max(lo, a), min(hi, b)
    if lo > hi:
        raise InfeasibleSystemError("the feasible interval is empty")
    return lo, hi


def _polish(at: Atoms, x, y, tol):
    """Newton iterations on the KKT system of the active atoms at y."""
    n = y.size
    g = at.values(y)
    scale = 1.0 + np.abs(at.d) + np.linalg.norm(at.c, axis=1)
    act = np.flatnonzero(g >= -1e-6 * scale)
    if act.size == 0 or act.size > n:
        return None
    lam = np.linalg.lstsq(at.jacobian(y)[act].T, x - y, rcond=None)[0]
    z = y.copy()
    for _ in range(30):
        J = at.jacobian(z)[act]
        H = np.eye(n) + np.einsum("k,kij->ij", lam, at.Q[act])
        F = np.concatenate([z - x + J.T @ lam, at.values(z)[act]])
        if np.linalg.norm(F) <= 1e-15 * (1.0 + np.linalg.norm(x)):
            break
        K = np.block([[H, J.T], [J, np.zeros((act.size, act.size))]])
        step = np.linalg.lstsq(K, -F, rcond=None)[0]
        z = z + step[:n]
        lam = lam + step[n:]
    if np.any(lam < -tol) or np.max(at.values(z)) > 1e-12 * np.max(scale):
        return None
    return z


def project(system: InequalitySystem, p, x, tol: float = 1e-7):
    """Euclidean projection of x onto F(p).

    Returns
    -------
    y : ndarray
        Nearest feasible point.
    dist : float

    Raises
    ------
    InfeasibleSystemError
        When F(p) is empty.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    p = system.parameter(p)
    if system.max_value(x, p) <= 0:
        return x.copy(), 0.0
    n = system.n
    if n == 1:
        lo, hi = _interval(system, p)
        y = np.clip(x, lo, hi)
        return y, float(abs(y[0] - x[0]))

    at = atoms(system, p)
    if at.polyhedral:
        # z = y - x solves  min ||z||  s.t.  -c z >= c x + d
        z = least_distance(-at.c, at.c @ x + at.d)
        if z is None:
            raise InfeasibleSystemError("the polyhedral system has no feasible point")
        y = x + z
        return y, float(np.linalg.norm(z))

    xs, v = phase_one(system, p, x0=x)
    if v > tol:
        raise InfeasibleSystemError(f"no feasible point found (min max violation {v:.3g})")
    cons = [{"type": "ineq", "fun": lambda y: -at.values(y), "jac": lambda y: -at.jacobian(y)}]
    best_y, best = xs, float(np.linalg.norm(xs - x))
    for start in (xs, x):
        res = minimize(lambda y: 0.5 * np.sum((y - x) ** 2), start, jac=lambda y: y - x,
                       constraints=cons, method="SLSQP", options={"ftol": 1e-15, "maxiter": 500})
        y = _polish(at, x, res.x, tol)
        if y is None:
            y = _pull_back(at, res.x, xs)
        if y is not None and np.linalg.norm(y - x) < best:
            best_y, best = y, float(np.linalg.norm(y - x))
    return best_y, best


def _pull_back(at: Atoms, y, xs):
    """Move y toward the strictly feasible xs just far enough to become feasible."""
    if np.max(at.values(y)) <= 0:
        return y
    if np.max(at.values(xs)) >= 0:
        return None
    lo, hi = 0.0, 1.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if np.max(at.values(y + mid * (xs - y))) <= 0:
            hi = mid
        else:
            lo = mid
    return y + hi * (xs - y)
