"""Independent oracles and scenario generators shared by the test modules."""

from __future__ import annotations

import itertools
from contextlib import contextmanager

import numpy as np

from sipstab.convex_core import Affine, InequalitySystem, MaxAffine, Quadratic


# criterion number -> (title, passed, detail); printed by the conftest summary hook
ACCEPTANCE: dict = {}


@contextmanager
def criterion(number: int, title: str):
    """Record the outcome of one acceptance criterion; the body fills ``box["detail"]``."""
    box = {"detail": ""}
    try:
        yield box
    except BaseException as exc:
        ACCEPTANCE[number] = (title, False, f"{type(exc).__name__}: {exc}".splitlines()[0][:300])
        raise
    ACCEPTANCE[number] = (title, True, box["detail"])


def brute_min_norm(P: np.ndarray) -> float:
    """Least norm over the hull of the rows of P by enumerating supports.

    The optimum lies in the relative interior of the hull of at most k + 1
    affinely independent points; for each such subset the least-norm point of
    its affine hull is kept when its barycentric weights are nonnegative.
    """
    P = np.atleast_2d(np.asarray(P, dtype=float))
    m, k = P.shape
    best = np.inf
    for r in range(1, min(m, k + 1) + 1):
        for S in itertools.combinations(range(m), r):
            Q = P[list(S)]
            if r == 1:
                w = np.ones(1)
            else:
                B = (Q[1:] - Q[0]).T
                if np.linalg.matrix_rank(B) < r - 1:
                    continue
                try:
                    c = np.linalg.solve(B.T @ B, -B.T @ Q[0])
                except np.linalg.LinAlgError:
                    continue
                w = np.concatenate([[1.0 - c.sum()], c])
            if np.all(w >= -1e-12):
                best = min(best, float(np.linalg.norm(w @ Q)))
    return best


def random_system(rng: np.random.Generator, n: int, size: int, classes=("affine", "quadratic", "max_affine"),
                  min_slack: float = 0.2) -> tuple:
    """Random system strictly satisfied at a random centre with slack >= ``min_slack``.

    Returns the system and the centre.
    """
    x0 = rng.uniform(-1.0, 1.0, n)
    funcs = []
    for _ in range(size):
        kind = classes[rng.integers(len(classes))]
        s = min_slack + rng.uniform(0.0, 1.0)
        if kind == "affine":
            a = rng.normal(size=n)
            funcs.append(Affine(a, float(a @ x0 + s)))
        elif kind == "quadratic":
            M = rng.normal(size=(n, rng.integers(1, n + 1)))
            Q = M @ M.T
            c = rng.normal(size=n)
            d = -(0.5 * x0 @ Q @ x0 + c @ x0) - s
            funcs.append(Quadratic(Q, c, float(d)))
        else:
            k = int(rng.integers(2, 4))
            A = rng.normal(size=(k, n))
            b = A @ x0 + s + rng.uniform(0.0, 0.5, k)
            funcs.append(MaxAffine(A, b))
    return InequalitySystem(funcs), x0


def boundary_point(system, rng, x0, tries: int = 50):
    """A point of F(0) where some constraint is active, found on a ray from x0."""
    for _ in range(tries):
        d = rng.normal(size=system.n)
        d /= np.linalg.norm(d)
        if np.max(system.values(x0 + 50.0 * d)) <= 0:
            continue
        lo, hi = 0.0, 50.0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if np.max(system.values(x0 + mid * d)) <= 0:
                lo = mid
            else:
                hi = mid
        return x0 + lo * d
    raise RuntimeError("feasible set looks unbounded in every sampled direction")


def grid_minimize(fun, center, half_width: float, n: int, levels: int = 40, num: int = 21):
    """Zooming grid search for a convex function; pure sampling, no derivatives."""
    center = np.asarray(center, dtype=float)
    h = half_width
    best = center
    for _ in range(levels):
        axes = [np.linspace(c - h, c + h, num) for c in best]
        G = np.array(list(itertools.product(*axes)))
        vals = np.array([fun(g) for g in G])
        best = G[int(np.argmin(vals))]
        h *= 0.5
    return best


def parabola_quotient(p, x):
    """dist(x; F(p)) / dist(p; F^-1(x)) for x^2 - 1 <= p, in closed form (0/0 = 0)."""
    p = np.asarray(p, dtype=float)
    x = np.asarray(x, dtype=float)
    rad = np.sqrt(np.maximum(1.0 + p, 0.0))
    num = np.where(1.0 + p >= 0, np.maximum(np.abs(x) - rad, 0.0), np.inf)
    den = np.maximum(x * x - 1.0 - p, 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        q = np.where(num == 0, 0.0, num / den)
    return q
