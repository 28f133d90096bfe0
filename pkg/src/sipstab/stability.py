"""Stability certificates for the feasible-set map p -> F(p) at the nominal parameter 0.

* ``check_ssc``: strong Slater condition, by a primal search for a strictly
  feasible point and by the distance from the origin to the characteristic hull.
* ``distance_dual`` / ``distance_primal``: dist(x; F(p)) as a fractional sup
  over the characteristic hull, and by direct projection.
* ``lip_bound`` / ``coderivative_norm``: the exact Lipschitz bound at
  (0, xbar) from the least-norm point of a slice of the characteristic hull,
  computed twice through different generator sets and solvers.
* ``coderivative_member``: conic membership test for coderivative pairs.
* ``lip_sample``: seeded sampling of the distance quotient near (0, xbar).
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ._primal import phase_one, project
from .charset import CharacteristicCloud, build_characteristic, check_feasible, epsilon_active_cloud
from .config import DEFAULT_TOLERANCES, Tolerances
from .convex_core import InequalitySystem, residual
from .errors import InfeasibleSystemError, SSCViolationError
from .linearize import linearization_gap, linearize_system
from .minnorm import (SimplexWeights, cone_distance, constrained_min_norm,
                      fractional_sup_detail, least_distance, min_norm_point, slice_generators)

log = logging.getLogger(__name__)

DEFAULT_EPS_SCHEDULE = (1.0, 0.5, 0.1, 0.01, 0.0)
DEFAULT_RADII = (0.1, 0.01, 0.001)
DEFAULT_SAMPLES = 2000

MODE_SLATER = "slater-point-zero"
MODE_EMPTY = "empty-intersection-zero"
MODE_COMPUTED = "computed"


@dataclass(frozen=True)
class SlaterCertificate:
    """Outcome of ``check_ssc``.

    ``satisfied`` follows the primal route; ``dual_check`` is the distance of
    the origin to the characteristic hull (closure points included) and
    ``dual_satisfied`` its verdict. ``diagnostic`` is nonempty when the two
    routes disagree.
    """

    satisfied: bool
    witness: Optional[np.ndarray]
    slack: float
    best_value: float
    dual_check: float
    dual_satisfied: bool
    diagnostic: str = ""

    @property
    def routes_agree(self) -> bool:
        return self.satisfied == self.dual_satisfied


def check_ssc(system: InequalitySystem, grids=None, closure_points=None, justification: str = "",
              tolerances: Tolerances = DEFAULT_TOLERANCES) -> SlaterCertificate:
    """Check for a point x with ``sup_t f_t(x) < 0`` by both primal and dual routes."""
    x, best = phase_one(system)
    satisfied = best < -tolerances.feasibility
    cloud = build_characteristic(system, None, grids, closure_points, justification)
    z, _ = min_norm_point(cloud.generators(True))
    dual = float(np.linalg.norm(z))
    dual_ok = dual > tolerances.feasibility
    diag = ""
    if satisfied != dual_ok:
        diag = (f"primal route says {'satisfied' if satisfied else 'not satisfied'} "
                f"(best sup {best:.6g}) but the origin is at distance {dual:.6g} from the "
                "characteristic hull; the conjugate sampling may be too coarse")
        log.warning(diag)
    return SlaterCertificate(bool(satisfied), x if satisfied else None,
                             float(-best) if satisfied else 0.0, float(best), dual, bool(dual_ok), diag)


def _require_ssc(system: InequalitySystem, p=None, tolerances: Tolerances = DEFAULT_TOLERANCES):
    x, best = phase_one(system, p)
    if not best < -tolerances.feasibility:
        raise SSCViolationError(f"no strictly feasible point (best sup {best:.6g})")
    return x, -best


# ---------------------------------------------------------------------------
# distances


@dataclass(frozen=True)
class DistanceResult:
    """Dual-route distance with its error bars.

    ``gap`` bounds ``dist(x; F(p)) - value`` from above (distance units): it
    measures how much the sampled linearization may undercut the true set.
    ``residual_gap`` is the largest excess of the convex residual over the
    linearized residual at x and at the linearized projection point.
    """

    value: float
    gap: float
    residual_gap: float
    attained: bool
    weights: Optional[SimplexWeights]


def distance_dual_detail(system: InequalitySystem, p, x, grids=None,
                         tolerances: Tolerances = DEFAULT_TOLERANCES) -> DistanceResult:
    p = system.parameter(p)
    x = np.asarray(x, dtype=float).reshape(-1)
    xhat, slack = _require_ssc(system, p, tolerances)
    cloud = build_characteristic(system, p, grids)
    fs = fractional_sup_detail(cloud, x, tolerances)
    if fs.value == 0.0:
        return DistanceResult(0.0, 0.0, 0.0, True, fs.weights)
    # Project x onto the sampled polyhedron, then interpolate toward the Slater
    # point until the true constraints hold; the extra length bounds the gap.
    U, alpha = cloud.points[:, :-1], cloud.points[:, -1]
    z = least_distance(-U, U @ x - alpha)
    y = x + z
    res = float(residual(system, p, y))
    gap = res * float(np.linalg.norm(xhat - y)) / (res + slack) if res > 0 else 0.0
    lin = linearize_system(system, grids)
    rgap = linearization_gap(system, lin, p, np.vstack([x, y]))
    return DistanceResult(float(fs.value), float(gap), rgap, fs.attained, fs.weights)


def distance_dual(system: InequalitySystem, p, x, grids=None,
                  tolerances: Tolerances = DEFAULT_TOLERANCES) -> float:
    """dist(x; F(p)) as the sup of ``[<u, x> - alpha]_+ / ||u||`` over the characteristic hull.

    Raises
    ------
    SSCViolationError
        When sigma(p) has no strictly feasible point.
    """
    return distance_dual_detail(system, p, x, grids, tolerances).value


def distance_primal(system: InequalitySystem, p, x, tolerances: Tolerances = DEFAULT_TOLERANCES) -> float:
    """dist(x; F(p)) by Euclidean projection.

    Raises
    ------
    InfeasibleSystemError
        When F(p) is empty.
    """
    return project(system, p, x, tolerances.primal)[1]


# ---------------------------------------------------------------------------
# Lipschitz bound and coderivative norm


@dataclass(frozen=True)
class EpsilonDiagnostic:
    epsilon: float
    value: float
    active: int


@dataclass(frozen=True)
class ModulusCertificate:
    """Exact Lipschitz bound at (0, xbar) with its witness.

    ``attained`` is false when the least-norm point needs declared closure
    points, i.e. the bound is a limit not reached inside the sampled hull.
    ``weights`` refers to the cloud rows followed by closure points.
    """

    lip_value: float
    mode: str
    attained: bool
    u_star: Optional[np.ndarray] = None
    weights: Optional[SimplexWeights] = None
    support: tuple = ()
    reconstruction_error: float = 0.0
    eps_diagnostics: tuple = field(default_factory=tuple)
    sup_value: float = 0.0


def _nominal_cloud(system, xbar, grids, closure_points, justification) -> CharacteristicCloud:
    # linearizing at xbar too puts the gradients at xbar into the sample
    return build_characteristic(system, None, grids, closure_points, justification, extra_points=xbar)


def _eps_diagnostics(system, xbar, grids, schedule) -> tuple:
    out = []
    for eps in schedule:
        cloud = epsilon_active_cloud(system, xbar, eps, grids, extra_points=xbar)
        if len(cloud) == 0:
            out.append(EpsilonDiagnostic(float(eps), 0.0, 0))
            continue
        res = constrained_min_norm(cloud, xbar)
        val = 0.0 if res is None else _reciprocal(np.linalg.norm(res[0]))
        out.append(EpsilonDiagnostic(float(eps), val, len(set(cloud.origin.tolist()))))
    return tuple(out)


def _reciprocal(v: float) -> float:
    return math.inf if v == 0 else 1.0 / float(v)


def lip_bound(system: InequalitySystem, xbar, grids=None, eps_schedule: Sequence[float] = DEFAULT_EPS_SCHEDULE,
              closure_points=None, justification: str = "",
              tolerances: Tolerances = DEFAULT_TOLERANCES) -> ModulusCertificate:
    """Exact Lipschitz bound of the feasible-set map at (0, xbar).

    Zero when xbar is a strong Slater point or when no point of the hull lies
    on the slice ``alpha = <u, xbar>``; otherwise ``1 / ||u*||`` with u* the
    least-norm element of that slice.

    Raises
    ------
    InfeasiblePointError
        When xbar is not in F(0).
    SSCViolationError
        When the nominal system has no strictly feasible point.
    """
    xbar = check_feasible(system, xbar)
    _require_ssc(system, None, tolerances)
    sup_val = float(np.max(system.values(xbar)))
    diags = _eps_diagnostics(system, xbar, grids, eps_schedule)
    if sup_val < -tolerances.feasibility:
        return ModulusCertificate(0.0, MODE_SLATER, True, eps_diagnostics=diags, sup_value=sup_val)
    cloud = _nominal_cloud(system, xbar, grids, closure_points, justification)
    res = constrained_min_norm(cloud, xbar)
    if res is None:
        return ModulusCertificate(0.0, MODE_EMPTY, True, eps_diagnostics=diags, sup_value=sup_val)
    u_star, w = res
    P = cloud.generators(True)
    target = np.concatenate([u_star, [u_star @ xbar]])
    err = float(np.linalg.norm(w.lam @ P - target))
    labels = cloud.generator_labels(True)
    support = tuple(labels[i] for i in w.support)
    uses_closure = bool(np.any(w.lam[len(cloud):] > 1e-12))
    return ModulusCertificate(_reciprocal(np.linalg.norm(u_star)), MODE_COMPUTED, not uses_closure,
                              u_star, w, support, err, diags, sup_val)


def coderivative_norm(system: InequalitySystem, xbar, grids=None, closure_points=None,
                      justification: str = "", tolerances: Tolerances = DEFAULT_TOLERANCES) -> float:
    """Norm of the coderivative of the feasible-set map at (0, xbar).

    Works on the hypographical side: the slice generators come from the cloud
    together with the vertical ray, and the least-norm value is read off the
    least-distance problem ``min ||y||  s.t.  <v_i, y> >= 1`` over those
    generators, whose optimal norm is the reciprocal of the least norm in
    their hull.
    """
    xbar = check_feasible(system, xbar)
    _require_ssc(system, None, tolerances)
    if np.max(system.values(xbar)) < -tolerances.feasibility:
        return 0.0
    cloud = _nominal_cloud(system, xbar, grids, closure_points, justification)
    sl = slice_generators(cloud.generators(True), xbar, with_ray=True)
    if sl is None:
        return 0.0
    V = sl.points[:, :-1]
    y = least_distance(V, np.ones(V.shape[0]))
    return math.inf if y is None else float(np.linalg.norm(y))


def coderivative_member(system: InequalitySystem, xbar, p_star, x_star, grids=None,
                        tolerances: Tolerances = DEFAULT_TOLERANCES):
    """Test whether ``p_star`` belongs to the coderivative of F at (0, xbar) applied to ``x_star``.

    Returns
    -------
    member : bool
    residual : float
        Distance of ``(p_star, -x_star, -<x_star, xbar>)`` to the cone of
        ``(-e_t, u, f_t*(u))`` over sampled (t, u).
    weights : ConeWeights
    """
    xbar = check_feasible(system, xbar)
    gens = coderivative_generators(system, xbar, grids)
    p_star = system.parameter(p_star)
    x_star = np.asarray(x_star, dtype=float).reshape(-1)
    target = np.concatenate([p_star, -x_star, [-(x_star @ xbar)]])
    dist, w = cone_distance(gens, target)
    return bool(dist <= tolerances.membership), float(dist), w


def coderivative_generators(system: InequalitySystem, xbar, grids=None) -> np.ndarray:
    """Rows ``(-e_t, u, f_t*(u))`` for every sampled conjugate point of every index."""
    cloud = build_characteristic(system, None, grids, extra_points=xbar)
    E = np.zeros((len(cloud), len(system)))
    E[np.arange(len(cloud)), cloud.origin] = -1.0
    return np.hstack([E, cloud.points])


# ---------------------------------------------------------------------------
# sampling the distance quotient


@dataclass(frozen=True)
class QuotientSample:
    """One evaluation of ``dist(x; F(p)) / dist(p; F^-1(x))`` (0/0 = 0, pos/0 = inf)."""

    p: np.ndarray
    x: np.ndarray
    numerator: float
    denominator: float

    @property
    def ratio(self) -> float:
        if self.numerator == 0:
            return 0.0
        if self.denominator == 0:
            return math.inf
        return self.numerator / self.denominator


def quotient_sample(system: InequalitySystem, p, x, tolerances: Tolerances = DEFAULT_TOLERANCES) -> QuotientSample:
    p = system.parameter(p)
    x = np.asarray(x, dtype=float).reshape(-1)
    den = float(residual(system, p, x))
    if den == 0:
        return QuotientSample(p, x, 0.0, 0.0)
    try:
        num = distance_primal(system, p, x, tolerances)
    except InfeasibleSystemError:
        num = math.inf
    return QuotientSample(p, x, num, den)


# residuals below this many rounding units of the evaluation scale are noise
NOISE_UNITS = 1000.0


@dataclass(frozen=True)
class LipSampleRow:
    """Largest finite quotient among the samples drawn at one radius.

    ``unresolved`` counts samples whose residual was positive but below the
    rounding noise of the constraint evaluation; their quotients are not
    meaningful and are left out of ``max_ratio``.
    """

    radius: float
    max_ratio: float
    samples: int
    nonzero: int
    infinite: int
    unresolved: int = 0


def _ball(rng, n, count, radius):
    d = rng.standard_normal((count, n))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    return d * (radius * rng.random(count) ** (1.0 / n))[:, None]


def lip_sample(system: InequalitySystem, xbar, radii: Sequence[float] = DEFAULT_RADII,
               samples: int = DEFAULT_SAMPLES, seed: int = 0, threads: int = 1,
               tolerances: Tolerances = DEFAULT_TOLERANCES) -> list:
    """Seeded maxima of the distance quotient over shrinking neighbourhoods of (0, xbar).

    For each radius r, p is drawn uniformly from the sup-norm ball of radius r
    and x uniformly from the Euclidean ball of radius r around xbar. The
    draws depend only on ``seed``, and the max reduction does not depend on
    ``threads``.
    """
    xbar = np.asarray(xbar, dtype=float).reshape(-1)
    _require_ssc(system, None, tolerances)
    rng = np.random.default_rng(seed)
    T, n = len(system), system.n
    slope = max(float(np.linalg.norm(f.subgradient(xbar))) for f in system.functions)
    rows = []
    for r in radii:
        P = rng.uniform(-r, r, size=(samples, T))
        X = xbar + _ball(rng, n, samples, r)
        V = system.values(X)
        den = np.maximum(np.max(V - P, axis=1), 0.0)
        scale = 1.0 + np.max(np.abs(V), axis=1) + np.max(np.abs(P), axis=1) \
            + slope * np.max(np.abs(X), axis=1)
        noise = (den > 0) & (den <= NOISE_UNITS * np.finfo(float).eps * scale)
        todo = np.flatnonzero((den > 0) & ~noise)

        def ratio(i):
            try:
                num = distance_primal(system, P[i], X[i], tolerances)
            except InfeasibleSystemError:
                return math.inf
            return num / den[i]

        if threads > 1 and todo.size > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                vals = list(pool.map(ratio, todo))
        else:
            vals = [ratio(i) for i in todo]
        vals = np.array(vals, dtype=float)
        finite = vals[np.isfinite(vals)]
        rows.append(LipSampleRow(float(r), float(finite.max()) if finite.size else 0.0,
                                 int(samples), int(todo.size), int(np.sum(~np.isfinite(vals))),
                                 int(noise.sum())))
    return rows
