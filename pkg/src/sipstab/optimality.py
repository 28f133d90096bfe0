"""Farkas-type consequence tests and stationarity certificates.

A linear inequality ``<v, x> <= alpha`` follows from sigma(p) when ``(v, alpha)``
lies in the closed cone spanned by the characteristic cloud of sigma(p) and
the vertical ray. Stationarity of an objective phi(p, x) at (0, xbar) over the
graph of F asks that ``-(grad_p, grad_x, <grad_x, xbar>)`` lie in the closed
cone spanned by ``(-e_t, u, f_t*(u))``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ._primal import phase_one
from .charset import build_characteristic, check_feasible
from .config import DEFAULT_TOLERANCES, Tolerances
from .convex_core import InequalitySystem
from .errors import InfeasibleSystemError
from .minnorm import ConeWeights, cone_distance
from .stability import coderivative_generators

STATUS_SATISFIED = "satisfied"
STATUS_INCONCLUSIVE = "inconclusive"
STATUS_VIOLATED = "violated"


@dataclass(frozen=True)
class ConsequenceQuery:
    """Candidate consequence ``<v, x> <= alpha``."""

    v: np.ndarray
    alpha: float

    def __post_init__(self):
        v = np.asarray(self.v, dtype=float).reshape(-1)
        if not (np.all(np.isfinite(v)) and np.isfinite(self.alpha)):
            raise ValueError("query entries must be finite")
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "alpha", float(self.alpha))


@dataclass(frozen=True)
class SoundnessCheck:
    """Worst value of ``<v, x> - alpha`` over sampled feasible points."""

    points: int
    worst_excess: float
    passed: bool


@dataclass(frozen=True)
class FarkasResult:
    holds: bool
    residual: float
    weights: ConeWeights
    soundness: Optional[SoundnessCheck] = None

    def __iter__(self):
        return iter((self.holds, self.residual, self.weights))


def sample_feasible_points(system: InequalitySystem, p=None, count: int = 1000, seed: int = 0,
                           reach: float = 100.0) -> np.ndarray:
    """Seeded points of F(p): random chords from a phase-one point, half of them at the boundary.

    Each direction is followed until the boundary of F(p) (found by bisection
    on the constraint values) or until length ``reach``.
    """
    x0, v0 = phase_one(system, p)
    if v0 > 1e-9:
        raise InfeasibleSystemError(f"F(p) appears empty (min max violation {v0:.3g})")
    p = system.parameter(p)
    rng = np.random.default_rng(seed)
    D = rng.standard_normal((count, system.n))
    D /= np.linalg.norm(D, axis=1, keepdims=True)

    def feasible(steps):
        return np.max(system.values(x0 + steps[:, None] * D) - p, axis=1) <= 0

    lo = np.zeros(count)
    hi = np.full(count, reach)
    inside = feasible(hi)
    lo[inside] = hi[inside]
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        ok = feasible(mid) & ~inside
        lo = np.where(ok, mid, lo)
        hi = np.where(ok | inside, hi, mid)
    frac = np.ones(count)
    frac[count // 2:] = rng.random(count - count // 2)
    return x0 + (lo * frac)[:, None] * D


def farkas_consequence(system: InequalitySystem, p, query: ConsequenceQuery, grids=None,
                       extra_points=None, tolerances: Tolerances = DEFAULT_TOLERANCES,
                       soundness_samples: int = 0, seed: int = 0) -> FarkasResult:
    """Decide whether ``<v, x> <= alpha`` is a consequence of sigma(p).

    Parameters
    ----------
    soundness_samples : int
        When positive and the query holds, that many feasible points are
        sampled and checked against the query.

    Raises
    ------
    InfeasibleSystemError
        When F(p) is empty.
    """
    p = system.parameter(p)
    _, v0 = phase_one(system, p)
    if v0 > tolerances.feasibility:
        raise InfeasibleSystemError(f"F(p) is empty (min max violation {v0:.3g})")
    if query.v.size != system.n:
        raise ValueError("query dimension does not match the system")
    cloud = build_characteristic(system, p, grids, extra_points=extra_points)
    gens = np.vstack([cloud.points, cloud.epi_ray])
    dist, w = cone_distance(gens, np.concatenate([query.v, [query.alpha]]))
    holds = dist <= tolerances.membership
    sound = None
    if holds and soundness_samples > 0:
        X = sample_feasible_points(system, p, soundness_samples, seed)
        worst = float(np.max(X @ query.v - query.alpha))
        sound = SoundnessCheck(len(X), worst, worst <= tolerances.membership)
    return FarkasResult(bool(holds), float(dist), w, sound)


def normal_cone_member(system: InequalitySystem, xbar, v, grids=None,
                       tolerances: Tolerances = DEFAULT_TOLERANCES) -> FarkasResult:
    """Whether v is normal to F(0) at xbar, i.e. ``<v, x> <= <v, xbar>`` follows from sigma(0)."""
    xbar = check_feasible(system, xbar)
    v = np.asarray(v, dtype=float).reshape(-1)
    return farkas_consequence(system, None, ConsequenceQuery(v, float(v @ xbar)), grids,
                              extra_points=xbar, tolerances=tolerances)


@dataclass(frozen=True)
class StationarityCertificate:
    """Cone-distance residual of the stationarity inclusion at (0, xbar).

    ``multipliers`` sums the cone weights per index (the Lagrange multiplier
    of each constraint).
    """

    residual: float
    weights: ConeWeights
    multipliers: np.ndarray
    status: str
    grad_p: np.ndarray
    grad_x: np.ndarray

    @property
    def satisfied(self) -> bool:
        return self.status == STATUS_SATISFIED


def _status(res: float, tol: Tolerances) -> str:
    if res <= tol.membership:
        return STATUS_SATISFIED
    if res <= tol.violation:
        return STATUS_INCONCLUSIVE
    return STATUS_VIOLATED


def check_stationarity_smooth(system: InequalitySystem, xbar, grad_p, grad_x, grids=None,
                              tolerances: Tolerances = DEFAULT_TOLERANCES) -> StationarityCertificate:
    """Stationarity of a differentiable objective with gradients (grad_p, grad_x) at (0, xbar)."""
    xbar = check_feasible(system, xbar)
    gens = coderivative_generators(system, xbar, grids)
    return _certificate(system, xbar, gens, grad_p, grad_x, tolerances)


def _certificate(system, xbar, gens, grad_p, grad_x, tolerances) -> StationarityCertificate:
    gp = system.parameter(grad_p)
    gx = np.asarray(grad_x, dtype=float).reshape(-1)
    if gx.size != system.n:
        raise ValueError("grad_x has the wrong dimension")
    target = -np.concatenate([gp, gx, [gx @ xbar]])
    dist, w = cone_distance(gens, target)
    T = len(system)
    mult = np.zeros(T)
    np.add.at(mult, np.argmax(-gens[:, :T], axis=1), w.mu)
    return StationarityCertificate(float(dist), w, mult, _status(dist, tolerances), gp, gx)


@dataclass(frozen=True)
class UpperStationarity:
    """Certificates for each supplied upper subgradient; ``vacuous`` when none were given."""

    certificates: tuple
    all_satisfied: bool
    vacuous: bool


def check_stationarity_upper(system: InequalitySystem, xbar, upper_gradients: Sequence, grids=None,
                             tolerances: Tolerances = DEFAULT_TOLERANCES) -> UpperStationarity:
    """Check every supplied upper subgradient ``(grad_p, grad_x)``; a minimizer satisfies all of them."""
    xbar = check_feasible(system, xbar)
    pairs = list(upper_gradients)
    if not pairs:
        return UpperStationarity((), True, True)
    gens = coderivative_generators(system, xbar, grids)
    certs = tuple(_certificate(system, xbar, gens, gp, gx, tolerances) for gp, gx in pairs)
    return UpperStationarity(certs, all(c.satisfied for c in certs), False)
