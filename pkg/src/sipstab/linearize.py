"""Replace each convex inequality by the affine inequalities read off its conjugate graph.

For every sampled point (u, beta) on the graph of f_t*, the row
``<u, x> <= beta + rho`` is implied by ``f_t(x) <= p_t`` when ``rho = p_t``
(Fenchel-Young). The embedded parameter therefore copies p_t onto every row
that came from index t, which keeps the sup-norm unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .convex_core import InequalitySystem, conjugate_graph_sample, grid_for


@dataclass(frozen=True, eq=False)
class LinearSystem:
    """Rows ``<A[r], x> <= b[r] + rho[r]`` with ``origin[r]`` the source index position."""

    A: np.ndarray
    b: np.ndarray
    origin: np.ndarray
    labels: tuple

    @property
    def n(self) -> int:
        return self.A.shape[1]

    def __len__(self) -> int:
        return self.A.shape[0]

    @property
    def rows(self):
        """List of ``(a, b, (label, a))`` triples, the last entry naming the row's origin."""
        return [(a, float(b), (self.labels[t], a)) for a, b, t in zip(self.A, self.b, self.origin)]

    def values(self, x, rho=None) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        rho = np.zeros(len(self)) if rho is None else np.asarray(rho, dtype=float)
        return x @ self.A.T - self.b - rho

    def residual(self, x, rho=None):
        return np.maximum(np.max(self.values(x, rho), axis=-1), 0.0)


def linearize_system(system: InequalitySystem, grids=None, extra_points=None) -> LinearSystem:
    """Linear system whose rows are sampled from the conjugate graphs of the constraints.

    Parameters
    ----------
    system : InequalitySystem
    grids : None, GridConfig or mapping of label to GridConfig
        Sampling grids for quadratic constraints; affine and max-affine
        constraints are linearized exactly and ignore the grid.
    extra_points : array_like, optional
        Additional points x (for instance a reference point) at which every
        quadratic constraint is also linearized.

    Returns
    -------
    LinearSystem
        Rows are deduplicated per origin index.
    """
    A_parts, b_parts, origin = [], [], []
    for t, (f, label) in enumerate(zip(system.functions, system.labels)):
        U, beta = conjugate_graph_sample(f, grid_for(grids, label), extra_points)
        A_parts.append(U)
        b_parts.append(beta)
        origin.append(np.full(len(beta), t, dtype=int))
    return LinearSystem(np.vstack(A_parts), np.concatenate(b_parts),
                        np.concatenate(origin), tuple(system.labels))


@dataclass(frozen=True)
class EmbeddedParameter:
    """One perturbation per linearized row, equal to p_t for rows coming from index t."""

    values: np.ndarray

    @property
    def norm(self) -> float:
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0


def embed_parameter(p, lin: LinearSystem) -> EmbeddedParameter:
    p = np.asarray(p, dtype=float).reshape(-1)
    if p.size != len(lin.labels):
        raise ValueError(f"parameter has {p.size} entries, system has {len(lin.labels)}")
    return EmbeddedParameter(p[lin.origin])


def linearization_gap(system: InequalitySystem, lin: LinearSystem, p, probes: Sequence) -> float:
    """Largest excess of the convex residual over the linearized residual at the probes.

    Always nonnegative because every linearized row is implied by its source
    constraint; zero for polyhedral systems.
    """
    p = system.parameter(p)
    rho = embed_parameter(p, lin).values
    X = np.atleast_2d(np.asarray(probes, dtype=float))
    conv = np.maximum(system.max_value(X, p), 0.0)
    linr = lin.residual(X, rho)
    return float(max(0.0, np.max(conv - linr)))

