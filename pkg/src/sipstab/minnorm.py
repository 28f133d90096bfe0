"""Small dense solvers behind every dual computation.

* ``min_norm_point``: Wolfe's algorithm for the least-norm element of a
  convex hull of finitely many points.
* ``constrained_min_norm``: least ``u``-norm over the slice
  ``{(u, alpha) in co(points) : alpha = <u, xbar>}``.
* ``nnls`` / ``cone_distance``: Lawson-Hanson nonnegative least squares and
  the distance from a target to a finitely generated cone.
* ``least_distance``: least-norm solution of ``G y >= h`` through NNLS.
* ``fractional_sup``: sup over a hull of ``[<u, x> - alpha]_+ / ||u||`` by
  bisection on the ratio.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .config import DEFAULT_TOLERANCES, Tolerances

SUPPORT_TOL = 1e-12
_EPS = np.finfo(float).eps


@dataclass(frozen=True)
class SimplexWeights:
    """Convex-combination weights: lam >= 0 summing to one."""

    lam: np.ndarray

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.lam > SUPPORT_TOL)

    def combine(self, points) -> np.ndarray:
        return self.lam @ np.asarray(points, dtype=float)


@dataclass(frozen=True)
class ConeWeights:
    """Conic-combination weights: mu >= 0, no sum constraint."""

    mu: np.ndarray

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.mu > SUPPORT_TOL)

    def combine(self, generators) -> np.ndarray:
        return self.mu @ np.asarray(generators, dtype=float)


def _as_points(points) -> np.ndarray:
    P = np.asarray(points, dtype=float)
    if P.ndim == 1:
        P = P[:, None]
    if P.ndim != 2 or P.shape[0] == 0:
        raise ValueError("need a nonempty (m, k) array of points")
    if not np.all(np.isfinite(P)):
        raise ValueError("points must be finite")
    return P


def _affine_minimizer(Q: np.ndarray) -> np.ndarray:
    """Weights w (sum 1) of the least-norm point of the affine hull of the rows of Q."""
    if Q.shape[0] == 1:
        return np.ones(1)
    q0 = Q[0]
    B = (Q[1:] - q0).T
    c = np.linalg.lstsq(B, -q0, rcond=None)[0]
    return np.concatenate([[1.0 - c.sum()], c])


def min_norm_point(points, tol: float = 1e-12, max_iter: Optional[int] = None):
    """Least-norm point of the convex hull of ``points`` (Wolfe's algorithm).

    Parameters
    ----------
    points : array_like, shape (m, k)
        Hull generators.
    tol : float
        Relative stopping tolerance on the Wolfe gap
        ``||z||^2 - min_j <p_j, z>`` (scaled by ``max_j ||p_j||^2``).

    Returns
    -------
    z : ndarray, shape (k,)
    weights : SimplexWeights
        ``z = weights.lam @ points``.
    """
    P = _as_points(points)
    m = P.shape[0]
    sq = np.einsum("ij,ij->i", P, P)
    scale = max(float(sq.max()), np.finfo(float).tiny)
    S = [int(np.argmin(sq))]
    lam = np.ones(1)
    x = P[S[0]].copy()
    max_iter = max_iter if max_iter is not None else 50 * m + 100

    for _ in range(max_iter):
        dots = P @ x
        j = int(np.argmin(dots))
        if x @ x - dots[j] <= tol * scale or j in S:
            break
        S.append(j)
        lam = np.append(lam, 0.0)
        for _inner in range(len(S) + 5):
            w = _affine_minimizer(P[S])
            if np.all(w > 0):
                lam = w
                break
            neg = (w <= 0) & (lam - w > 0)
            if not np.any(neg):
                lam = np.clip(w, 0.0, None)
                lam /= lam.sum()
                break
            ratios = lam[neg] / (lam[neg] - w[neg])
            theta = float(ratios.min())
            lam = lam + theta * (w - lam)
            drop = np.flatnonzero(neg)[int(np.argmin(ratios))]
            lam[drop] = 0.0
            keep = lam > 0
            S = [s for s, k in zip(S, keep) if k]
            lam = lam[keep] / lam[keep].sum()
        x = lam @ P[S]

    full = np.zeros(m)
    full[S] = lam
    return full @ P, SimplexWeights(full)


def wolfe_certificate(points, z) -> float:
    """Smallest value of <z, q - z> over generators q (nonnegative at the optimum)."""
    P = _as_points(points)
    z = np.asarray(z, dtype=float)
    return float(np.min(P @ z) - z @ z)


# ---------------------------------------------------------------------------
# slice of a hull cut by alpha = <u, xbar>


def _cloud_points(cloud, include_closure: bool = True) -> np.ndarray:
    if hasattr(cloud, "generators"):
        return np.asarray(cloud.generators(include_closure), dtype=float)
    return _as_points(cloud)


@dataclass(frozen=True)
class SliceGenerators:
    """Generators of a hull slice, each a convex combination of original points.

    ``points`` are the slice generators (rows, full (u, alpha) coordinates) and
    ``combos`` maps them back: ``points = combos @ original``.
    """

    points: np.ndarray
    combos: np.ndarray
    offsets: np.ndarray = field(default_factory=lambda: np.zeros(0))


def slice_generators(P: np.ndarray, xbar, tol: float = 1e-10, with_ray: bool = False):
    """Generators of ``{q in co(P) : alpha(q) = <u(q), xbar>}``.

    With ``with_ray`` the hull is ``co(P) + cone{(0, 1)}`` and points lying
    below the slice contribute their vertical projection onto it; the
    ``offsets`` field records how far each generator was lifted.

    Returns ``None`` when the slice is empty.
    """
    xbar = np.asarray(xbar, dtype=float).reshape(-1)
    U, alpha = P[:, :-1], P[:, -1]
    g = alpha - U @ xbar
    scale = 1.0 + np.abs(alpha) + np.linalg.norm(U, axis=1) * np.linalg.norm(xbar)
    zero = np.abs(g) <= tol * scale
    pos = np.flatnonzero((g > 0) & ~zero)
    neg = np.flatnonzero((g < 0) & ~zero)
    m = P.shape[0]
    rows, combos, offsets = [], [], []
    for i in np.flatnonzero(zero):
        rows.append(np.concatenate([U[i], [U[i] @ xbar]]))
        c = np.zeros(m)
        c[i] = 1.0
        combos.append(c)
        offsets.append(-g[i] if with_ray else 0.0)
    for i in pos:
        for j in neg:
            theta = g[i] / (g[i] - g[j])
            c = np.zeros(m)
            c[i] = 1.0 - theta
            c[j] = theta
            u = c @ U
            rows.append(np.concatenate([u, [u @ xbar]]))
            combos.append(c)
            offsets.append(0.0)
    if with_ray:
        for j in neg:
            c = np.zeros(m)
            c[j] = 1.0
            rows.append(np.concatenate([U[j], [U[j] @ xbar]]))
            combos.append(c)
            offsets.append(-g[j])
    if not rows:
        return None
    return SliceGenerators(np.array(rows), np.array(combos), np.array(offsets))


def constrained_min_norm(cloud, xbar, include_closure: bool = True, tol: float = 1e-10):
    """Least ``||u||`` over ``{(u, alpha) in co(cloud) : alpha = <u, xbar>}``.

    The slice of a finitely generated hull by a hyperplane is itself the hull
    of the generators lying on the hyperplane and of the crossing points of
    every segment joining generators on opposite sides, so the problem reduces
    exactly to an unconstrained ``min_norm_point`` over those generators.

    Parameters
    ----------
    cloud : CharacteristicCloud or array_like, shape (m, n + 1)
        Rows ``(u, alpha)``. Closure points of a cloud are appended when
        ``include_closure`` is true.
    xbar : array_like, shape (n,)

    Returns
    -------
    None or (u_star, SimplexWeights)
        ``None`` when the slice is empty. The weights refer to the rows of
        the cloud (closure points last) and reconstruct ``(u_star, <u_star, xbar>)``.
    """
    P = _cloud_points(cloud, include_closure)
    sl = slice_generators(P, xbar, tol)
    if sl is None:
        return None
    n = P.shape[1] - 1
    z, w = min_norm_point(sl.points[:, :n])
    lam = w.lam @ sl.combos
    lam = np.clip(lam, 0.0, None)
    lam /= lam.sum()
    return lam @ P[:, :n], SimplexWeights(lam)


# ---------------------------------------------------------------------------
# nonnegative least squares


def nnls(A, b, max_iter: Optional[int] = None, tol: Optional[float] = None):
    """Lawson-Hanson active-set solver for ``min ||A x - b||, x >= 0``.

    Returns
    -------
    x : ndarray, shape (n,)
    rnorm : float
        Residual norm ``||A x - b||``.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float).reshape(-1)
    m, n = A.shape
    if b.size != m:
        raise ValueError("A and b have incompatible shapes")
    # the solution set is invariant under positive column scaling, so work with unit columns
    scale = np.abs(A).max(axis=0, initial=0.0)
    scale[scale == 0] = 1.0
    A_in, A = A, A / scale
    if tol is None:
        tol = 10 * _EPS * max(m, n) * float(np.linalg.norm(b))
    max_iter = max_iter if max_iter is not None else 3 * n + 50
    x = np.zeros(n)
    passive = np.zeros(n, dtype=bool)
    blocked = np.zeros(n, dtype=bool)
    w = A.T @ b

    for _ in range(max_iter):
        cand = ~passive & ~blocked & (w > tol)
        if not np.any(cand):
            break
        j = int(np.argmax(np.where(cand, w, -np.inf)))
        passive[j] = True
        idx = np.flatnonzero(passive)
        s = np.zeros(n)
        s[idx] = np.linalg.lstsq(A[:, idx], b, rcond=None)[0]
        if s[j] <= 0:
            # the entering column does not help numerically; skip it until x moves
            passive[j] = False
            blocked[j] = True
            continue
        for _inner in range(n + 1):
            bad = passive & (s <= 0)
            if not np.any(bad):
                break
            ratios = x[bad] / (x[bad] - s[bad])
            alpha = float(ratios.min())
            x = x + alpha * (s - x)
            passive &= x > 10 * _EPS * max(1.0, float(np.abs(x).max()))
            passive[np.flatnonzero(bad)[int(np.argmin(ratios))]] = False
            x[~passive] = 0.0
            idx = np.flatnonzero(passive)
            s = np.zeros(n)
            if idx.size:
                s[idx] = np.linalg.lstsq(A[:, idx], b, rcond=None)[0]
        x = s
        blocked[:] = False
        w = A.T @ (b - A @ x)
    x = x / scale
    return x, float(np.linalg.norm(A_in @ x - b))


def cone_distance(generators, target, tol: Optional[float] = None):
    """Distance from ``target`` to the cone generated by the rows of ``generators``.

    Returns
    -------
    dist : float
    weights : ConeWeights
        Minimizing ``mu >= 0`` with ``target`` approximately ``mu @ generators``.
    """
    G = np.asarray(generators, dtype=float)
    t = np.asarray(target, dtype=float).reshape(-1)
    if G.ndim != 2 or G.shape[0] == 0:
        raise ValueError("need at least one generator")
    if G.shape[1] != t.size:
        raise ValueError("generator and target dimensions differ")
    mu, dist = nnls(G.T, t, tol=tol)
    return dist, ConeWeights(mu)


def cone_kkt_violation(generators, target, mu) -> float:
    """Largest KKT violation of a cone projection (zero at an exact solution)."""
    G = np.asarray(generators, dtype=float)
    r = np.asarray(target, dtype=float) - mu @ G
    grad = G @ r
    return float(max(np.max(grad, initial=0.0), np.max(np.abs(mu * grad), initial=0.0)))


def least_distance(G, h):
    """Least-norm ``y`` with ``G y >= h`` (Lawson-Hanson reduction to NNLS).

    Returns ``None`` when the system is infeasible.
    """
    G = np.asarray(G, dtype=float)
    h = np.asarray(h, dtype=float).reshape(-1)
    n = G.shape[1]
    E = np.vstack([G.T, h[None, :]])
    f = np.zeros(n + 1)
    f[-1] = 1.0
    mu, _ = nnls(E, f)
    r = E @ mu - f
    if abs(r[-1]) <= 1e-12 * max(1.0, float(np.linalg.norm(r))) or np.linalg.norm(r) == 0:
        return None
    return -r[:n] / r[-1]


# ---------------------------------------------------------------------------
# fractional sup over a hull


@dataclass(frozen=True)
class FractionalSup:
    """Outcome of ``fractional_sup_detail``.

    ``value`` is the sup; ``weights`` the hull weights of the best point found
    by the last successful bisection test; ``attained`` records whether that
    point actually reaches ``value`` within the bisection tolerance.
    """

    value: float
    weights: Optional[SimplexWeights]
    attained: bool
    iterations: int


def _ratio(u, d):
    nu = float(np.linalg.norm(u))
    if d <= 0:
        return 0.0
    return math.inf if nu == 0 else d / nu


def fractional_sup_detail(cloud, x, tolerances: Tolerances = DEFAULT_TOLERANCES,
                          include_closure: bool = False, upper_cap: float = 1e12):
    """Sup of ``[<u, x> - alpha]_+ / ||u||`` over ``(u, alpha)`` in the hull of a cloud.

    The test "some hull point reaches ratio beta" is homogeneous in the hull
    weights: it asks whether the cone generated by ``(beta u_i, d_i)``, with
    ``d_i = <u_i, x> - alpha_i``, meets the 45-degree cone around the last
    axis. That is decided by one cone projection of the last unit vector,
    whose distance to the cone is at most ``1/sqrt(2)`` exactly when the test
    succeeds.
    """
    P = _cloud_points(cloud, include_closure)
    x = np.asarray(x, dtype=float).reshape(-1)
    U, alpha = P[:, :-1], P[:, -1]
    d = U @ x - alpha
    m, n = U.shape
    if np.max(d) <= 0:
        return FractionalSup(0.0, None, True, 0)
    unorm = np.linalg.norm(U, axis=1)
    if np.any((unorm == 0) & (d > 0)):
        i = int(np.flatnonzero((unorm == 0) & (d > 0))[0])
        lam = np.zeros(m)
        lam[i] = 1.0
        return FractionalSup(math.inf, SimplexWeights(lam), True, 0)
    vertex = np.where(d > 0, d / np.where(unorm > 0, unorm, 1.0), 0.0)
    best_i = int(np.argmax(vertex))
    lo = float(vertex[best_i])
    lam = np.zeros(m)
    lam[best_i] = 1.0
    best = lam
    target = np.zeros(n + 1)
    target[-1] = 1.0
    threshold = 1.0 / math.sqrt(2.0)

    def test(beta):
        G = np.column_stack([beta * U, d])
        dist, w = cone_distance(G, target)
        if dist <= threshold and w.mu.sum() > 0:
            return w.mu / w.mu.sum()
        return None

    hi = lo + 1.0
    iters = 0
    while True:
        iters += 1
        w = test(hi)
        if w is None:
            break
        best, lo = w, hi
        hi *= 2.0
        if hi > upper_cap:
            return FractionalSup(math.inf, SimplexWeights(best), False, iters)
    while hi - lo > tolerances.bisection * (1.0 + lo):
        iters += 1
        mid = 0.5 * (lo + hi)
        w = test(mid)
        if w is None:
            hi = mid
        else:
            lo, best = mid, w
    achieved = _ratio(best @ U, float(best @ d))
    attained = achieved >= lo - 10 * tolerances.bisection * (1.0 + lo)
    return FractionalSup(lo, SimplexWeights(best), bool(attained), iters)


def fractional_sup(cloud, x, tolerances: Tolerances = DEFAULT_TOLERANCES) -> float:
    """Value of ``fractional_sup_detail``; 0 when x satisfies every cloud inequality."""
    return fractional_sup_detail(cloud, x, tolerances).value
