"""Convex constraint functions and the parametric inequality system built on them.

Three function classes are supported, each with an exactly computable
Fenchel conjugate:

* ``Affine``     f(x) = <a, x> - b
* ``Quadratic``  f(x) = 1/2 <x, Qx> + <c, x> + d   (Q symmetric PSD)
* ``MaxAffine``  f(x) = max_i (<a_i, x> - b_i)

An ``InequalitySystem`` is a finite (or truncated countable) family of such
functions; its right-hand side perturbations ``p`` live in l_inf(T) with the
sup-norm.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence, Union

import numpy as np
from scipy.optimize import linprog

from .errors import DimensionError, SpecError

SYMMETRY_TOL = 1e-12
PSD_TOL = 1e-10
RANGE_TOL = 1e-8


def _vector(x, n: Optional[int] = None, what: str = "x") -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if n is not None and arr.shape[-1] != n:
        raise DimensionError(f"{what} has dimension {arr.shape[-1]}, expected {n}")
    return arr


@dataclass(frozen=True)
class GridConfig:
    """Tensor grid on a box, used to sample subgradients of smooth pieces.

    ``lower``, ``upper`` and ``num`` may be scalars (same for every axis) or
    per-axis sequences.
    """

    lower: Union[float, Sequence[float]] = -5.0
    upper: Union[float, Sequence[float]] = 5.0
    num: Union[int, Sequence[int]] = 21

    def points(self, n: int) -> np.ndarray:
        lo = np.broadcast_to(np.asarray(self.lower, dtype=float), (n,))
        hi = np.broadcast_to(np.asarray(self.upper, dtype=float), (n,))
        num = np.broadcast_to(np.asarray(self.num, dtype=int), (n,))
        if np.any(num < 1):
            raise SpecError("grid needs at least one point per axis")
        if np.any(hi < lo):
            raise SpecError("grid upper bound below lower bound")
        axes = [np.linspace(l, h, k) if k > 1 else np.array([0.5 * (l + h)])
                for l, h, k in zip(lo, hi, num)]
        return np.array(list(itertools.product(*axes)), dtype=float).reshape(-1, n)

    def size(self, n: int) -> int:
        return int(np.prod(np.broadcast_to(np.asarray(self.num, dtype=int), (n,))))


DEFAULT_GRID = GridConfig()


def grid_for(grids, label: str) -> GridConfig:
    """Pick the grid for one index from None, a single GridConfig, or a per-label mapping.

    A mapping may carry a ``"default"`` entry used for labels it does not name.
    """
    if grids is None:
        return DEFAULT_GRID
    if isinstance(grids, GridConfig):
        return grids
    if isinstance(grids, Mapping):
        g = grids.get(label, grids.get("default", DEFAULT_GRID))
        if not isinstance(g, GridConfig):
            raise SpecError(f"grid for {label!r} is not a GridConfig")
        return g
    raise SpecError("grids must be None, a GridConfig or a mapping of label to GridConfig")


class ConvexFunction:
    """Common interface of the supported constraint functions."""

    kind: str = ""

    @property
    def n(self) -> int:
        raise NotImplementedError

    def value(self, x) -> np.ndarray:
        raise NotImplementedError

    def subgradient(self, x) -> np.ndarray:
        raise NotImplementedError

    def conjugate(self, u) -> float:
        raise NotImplementedError

    def graph_sample(self, grid: GridConfig, extra_points=None):
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class Affine(ConvexFunction):
    a: np.ndarray
    b: float

    kind = "affine"

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float).reshape(-1)
        if a.size == 0 or not np.all(np.isfinite(a)) or not np.isfinite(self.b):
            raise SpecError("affine data must be finite and nonempty")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", float(self.b))

    @property
    def n(self) -> int:
        return self.a.size

    def value(self, x):
        x = _vector(x, self.n)
        return x @ self.a - self.b

    def subgradient(self, x):
        x = _vector(x, self.n)
        return np.broadcast_to(self.a, x.shape).copy()

    def conjugate(self, u):
        u = _vector(u, self.n, "u")
        return self.b if np.all(np.abs(u - self.a) <= 1e-10) else np.inf

    def graph_sample(self, grid, extra_points=None):
        return self.a[None, :].copy(), np.array([self.b])

    def to_dict(self):
        return {"kind": self.kind, "a": self.a.tolist(), "b": self.b}


@dataclass(frozen=True, eq=False)
class Quadratic(ConvexFunction):
    Q: np.ndarray
    c: np.ndarray
    d: float = 0.0

    kind = "quadratic"

    def __post_init__(self):
        Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        c = np.asarray(self.c, dtype=float).reshape(-1)
        if Q.shape != (c.size, c.size) or c.size == 0:
            raise SpecError(f"Q has shape {Q.shape}, c has length {c.size}")
        if not (np.all(np.isfinite(Q)) and np.all(np.isfinite(c)) and np.isfinite(self.d)):
            raise SpecError("quadratic data must be finite")
        scale = max(1.0, float(np.max(np.abs(Q))))
        if np.max(np.abs(Q - Q.T)) > SYMMETRY_TOL * scale:
            raise SpecError("Q is not symmetric")
        Q = 0.5 * (Q + Q.T)
        w, V = np.linalg.eigh(Q)
        if w[0] < -PSD_TOL:
            raise SpecError(f"Q is not positive semidefinite (min eigenvalue {w[0]:.3g})")
        w = np.where(w < 0.0, 0.0, w)
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "d", float(self.d))
        object.__setattr__(self, "_eig", (w, V))

    @property
    def n(self) -> int:
        return self.c.size

    def value(self, x):
        x = _vector(x, self.n)
        return 0.5 * np.einsum("...i,ij,...j->...", x, self.Q, x) + x @ self.c + self.d

    def subgradient(self, x):
        x = _vector(x, self.n)
        return x @ self.Q + self.c

    def conjugate(self, u):
        u = _vector(u, self.n, "u")
        w, V = self._eig
        r = u - self.c
        z = V.T @ r
        pos = w > 1e-12 * max(1.0, float(w[-1]))
        rn = float(np.linalg.norm(r))
        if np.linalg.norm(z[~pos]) > RANGE_TOL * rn:
            return np.inf
        return float(0.5 * np.sum(z[pos] ** 2 / w[pos]) - self.d)

    def graph_sample(self, grid, extra_points=None):
        X = grid.points(self.n)
        if extra_points is not None:
            X = np.vstack([X, _vector(extra_points, self.n).reshape(-1, self.n)])
        U = self.subgradient(X)
        beta = np.einsum("ij,ij->i", U, X) - self.value(X)
        return U, beta

    def to_dict(self):
        return {"kind": self.kind, "Q": self.Q.tolist(), "c": self.c.tolist(), "d": self.d}


@dataclass(frozen=True, eq=False)
class MaxAffine(ConvexFunction):
    A: np.ndarray
    b: np.ndarray

    kind = "max_affine"

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        b = np.asarray(self.b, dtype=float).reshape(-1)
        if A.shape[0] == 0 or A.shape[0] != b.size or A.shape[1] == 0:
            raise SpecError("max-affine needs a nonempty list of (a_i, b_i) pieces")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
            raise SpecError("max-affine data must be finite")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    @classmethod
    def from_pieces(cls, pieces) -> "MaxAffine":
        pieces = list(pieces)
        if not pieces:
            raise SpecError("max-affine needs at least one piece")
        return cls(np.array([np.atleast_1d(a) for a, _ in pieces], dtype=float),
                   np.array([b for _, b in pieces], dtype=float))

    @property
    def n(self) -> int:
        return self.A.shape[1]

    def value(self, x):
        x = _vector(x, self.n)
        return np.max(x @ self.A.T - self.b, axis=-1)

    def subgradient(self, x):
        x = _vector(x, self.n)
        # argmax returns the lowest maximal index, which fixes the tie-break
        return self.A[np.argmax(x @ self.A.T - self.b, axis=-1)]

    def conjugate(self, u):
        u = _vector(u, self.n, "u")
        m = self.A.shape[0]
        A_eq = np.vstack([self.A.T, np.ones((1, m))])
        b_eq = np.concatenate([u, [1.0]])
        # row scaling keeps tiny slopes above the solver's absolute feasibility tolerance
        rs = np.maximum(np.abs(A_eq).max(axis=1), np.abs(b_eq))
        rs[rs == 0] = 1.0
        A_eq, b_eq = A_eq / rs[:, None], b_eq / rs
        res = linprog(self.b, A_eq=A_eq, b_eq=b_eq, bounds=(0, None), method="highs")
        if res.status == 2:
            # presolve can misjudge nearly dependent rows; confirm without it
            res = linprog(self.b, A_eq=A_eq, b_eq=b_eq, bounds=(0, None), method="highs",
                          options={"presolve": False})
        if res.status == 2:
            return np.inf
        if res.status != 0:
            raise RuntimeError(f"conjugate LP failed: {res.message}")
        return float(res.fun)

    def exposed_pieces(self) -> np.ndarray:
        """Indices of pieces whose (a_i, b_i) lies on the graph of the conjugate."""
        keep = []
        seen = []
        for i, (a, b) in enumerate(zip(self.A, self.b)):
            if any(np.array_equal(a, s) for s in seen):
                continue
            if self.conjugate(a) >= b - 1e-10 * (1.0 + abs(b)):
                keep.append(i)
                seen.append(a)
        return np.array(keep, dtype=int)

    def graph_sample(self, grid, extra_points=None):
        idx = self.exposed_pieces()
        return self.A[idx].copy(), self.b[idx].copy()

    def to_dict(self):
        return {"kind": self.kind,
                "pieces": [{"a": a.tolist(), "b": float(b)} for a, b in zip(self.A, self.b)]}


def function_from_dict(data: Mapping) -> ConvexFunction:
    kind = data.get("kind")
    if kind == "affine":
        return Affine(data["a"], data["b"])
    if kind == "quadratic":
        return Quadratic(data["Q"], data["c"], data.get("d", 0.0))
    if kind == "max_affine":
        return MaxAffine.from_pieces((pc["a"], pc["b"]) for pc in data["pieces"])
    raise SpecError(f"unknown function kind {kind!r}")


# Module-level operations mirror the methods for callers that prefer functions.

def evaluate(f: ConvexFunction, x):
    return f.value(x)


def subgradient(f: ConvexFunction, x):
    return f.subgradient(x)


def conjugate_value(f: ConvexFunction, u) -> float:
    return f.conjugate(u)


def conjugate_graph_sample(f: ConvexFunction, grid: GridConfig = DEFAULT_GRID, extra_points=None):
    """Sample points (u, beta) of the graph of f*.

    Quadratic pieces are sampled at u = grad f(x) for x on ``grid`` (plus
    ``extra_points``), with beta = <u, x> - f(x). Affine pieces give the single
    point (a, b); max-affine pieces give their exposed (a_i, b_i).

    Returns
    -------
    U : ndarray, shape (k, n)
    beta : ndarray, shape (k,)
    """
    U, beta = f.graph_sample(grid, extra_points)
    return _dedupe(U, beta)


def _dedupe(U: np.ndarray, beta: np.ndarray, decimals: int = 12):
    """Drop repeated (u, beta) rows (equal after rounding), keeping first occurrences."""
    if len(beta) <= 1:
        return U, beta
    key = np.round(np.column_stack([U, beta]), decimals)
    _, first = np.unique(key, axis=0, return_index=True)
    first = np.sort(first)
    return U[first], beta[first]


@dataclass(frozen=True)
class Parameter:
    """Right-hand side perturbation p, one entry per index, with the sup-norm."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).reshape(-1)
        if not np.all(np.isfinite(v)):
            raise SpecError("parameter entries must be finite")
        object.__setattr__(self, "values", v)

    @property
    def norm(self) -> float:
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)


class InequalitySystem:
    """The family {f_t(x) <= p_t, t in T} over R^n.

    Parameters
    ----------
    functions : sequence of ConvexFunction
    labels : sequence of str, optional
        Index labels; defaults to ``"t0", "t1", ...``.
    truncation : int, optional
        Truncation level N when the system stands for a countable family.
    family : str, optional
        Free-text description of the untruncated index family.
    """

    def __init__(self, functions: Sequence[ConvexFunction], labels=None,
                 truncation: Optional[int] = None, family: Optional[str] = None):
        functions = list(functions)
        if not functions:
            raise SpecError("an inequality system needs at least one constraint")
        n = functions[0].n
        for f in functions:
            if f.n != n:
                raise DimensionError("all constraint functions must share the dimension")
        if labels is None:
            labels = [f"t{i}" for i in range(len(functions))]
        labels = [str(s) for s in labels]
        if len(labels) != len(functions):
            raise SpecError("one label per constraint function is required")
        if len(set(labels)) != len(labels):
            raise SpecError("constraint labels must be unique")
        self.functions = tuple(functions)
        self.labels = tuple(labels)
        self.n = n
        self.truncation = truncation
        self.family = family

    def __len__(self) -> int:
        return len(self.functions)

    def __repr__(self) -> str:
        kinds = ", ".join(f.kind for f in self.functions[:6])
        more = ", ..." if len(self) > 6 else ""
        return f"InequalitySystem(n={self.n}, |T|={len(self)}, [{kinds}{more}])"

    @property
    def is_polyhedral(self) -> bool:
        return all(isinstance(f, (Affine, MaxAffine)) for f in self.functions)

    def parameter(self, p=None) -> np.ndarray:
        """Coerce ``p`` (None, Parameter, array, or {label: value}) to a vector."""
        if p is None:
            return np.zeros(len(self))
        if isinstance(p, Mapping):
            out = np.zeros(len(self))
            for key, val in p.items():
                out[self.labels.index(str(key))] = float(val)
            return out
        v = np.asarray(p, dtype=float).reshape(-1)
        if v.size != len(self):
            raise DimensionError(f"parameter has {v.size} entries, system has {len(self)}")
        if not np.all(np.isfinite(v)):
            raise SpecError("parameter entries must be finite")
        return v

    def values(self, x) -> np.ndarray:
        """Constraint values f_t(x); shape (|T|,) or (k, |T|) for a batch of points."""
        x = _vector(x, self.n)
        return np.stack([np.asarray(f.value(x), dtype=float) for f in self.functions], axis=-1)

    def max_value(self, x, p=None):
        return np.max(self.values(x) - self.parameter(p), axis=-1)

    def shifted(self, p) -> "InequalitySystem":
        """The system f_t - p_t <= 0, i.e. the nominal system re-centred at p."""
        p = self.parameter(p)
        out = []
        for f, pt in zip(self.functions, p):
            if isinstance(f, Affine):
                out.append(Affine(f.a, f.b + pt))
            elif isinstance(f, Quadratic):
                out.append(Quadratic(f.Q, f.c, f.d - pt))
            else:
                out.append(MaxAffine(f.A, f.b + pt))
        return InequalitySystem(out, self.labels, self.truncation, self.family)


def residual(system: InequalitySystem, p, x):
    """sup_t [f_t(x) - p_t]_+ , which is dist(p; F^{-1}(x)) in the sup-norm."""
    return np.maximum(system.max_value(x, p), 0.0)
