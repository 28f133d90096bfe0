import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from helpers import boundary_point, parabola_quotient, random_system
from sipstab.convex_core import Affine, InequalitySystem, MaxAffine, Quadratic
from sipstab.errors import InfeasiblePointError, SSCViolationError
from sipstab.scenario_io import builtin
from sipstab.stability import (MODE_COMPUTED, MODE_EMPTY, MODE_SLATER, check_ssc, coderivative_member,
                               coderivative_norm, distance_dual, distance_dual_detail, distance_primal, lip_bound,
                               lip_sample, quotient_sample)


def cvx_distance(system, p, x):
    cp = pytest.importorskip("cvxpy")
    y = cp.Variable(system.n)
    cons = []
    for f, pt in zip(system.functions, system.parameter(p)):
        if isinstance(f, Affine):
            cons.append(f.a @ y - f.b <= pt)
        elif isinstance(f, Quadratic):
            cons.append(0.5 * cp.quad_form(y, cp.psd_wrap(f.Q)) + f.c @ y + f.d <= pt)
        else:
            cons.append(cp.max(f.A @ y - f.b) <= pt)
    prob = cp.Problem(cp.Minimize(cp.sum_squares(y - x)), cons)
    prob.solve(solver=cp.CLARABEL)
    return math.sqrt(max(prob.value, 0.0))


def disk():
    return InequalitySystem([Quadratic(2 * np.eye(2), [0.0, 0.0], -1.0)])


def test_ssc_routes():
    c = check_ssc(disk())
    assert c.satisfied and c.dual_satisfied and c.routes_agree
    assert c.slack == pytest.approx(1.0, abs=1e-6)
    raw = check_ssc(builtin("parabola_raw").system)
    assert not raw.satisfied and raw.witness is None


def test_distance_closed_forms():
    S = disk()
    for x in ([3.0, 4.0], [0.1, 0.2], [-2.0, 0.0]):
        true = max(np.linalg.norm(x) - 1.0, 0.0)
        assert distance_primal(S, None, x) == pytest.approx(true, abs=1e-7)
        d = distance_dual_detail(S, None, x)
        assert d.value <= true + 1e-7
        assert true <= d.value + d.gap + 1e-7
    # perturbation grows the radius to sqrt(1 + p)
    assert distance_primal(S, [3.0], [3.0, 0.0]) == pytest.approx(1.0, abs=1e-7)


def test_distance_polyhedral_is_exact():
    S = InequalitySystem([Affine([1.0, 0.0], 1.0), Affine([0.0, 1.0], 1.0), Affine([-1.0, -1.0], 1.0)])
    x = np.array([3.0, 3.0])
    assert distance_primal(S, None, x) == pytest.approx(2 * np.sqrt(2), abs=1e-9)
    d = distance_dual_detail(S, None, x)
    assert d.value == pytest.approx(2 * np.sqrt(2), abs=1e-8)
    assert d.gap == pytest.approx(0.0, abs=1e-9)


def test_distance_requires_ssc():
    S = builtin("parabola_raw").system
    with pytest.raises(SSCViolationError):
        distance_dual(S, None, [1.0])


@pytest.mark.parametrize("seed", range(6))
def test_primal_distance_against_cvxpy(seed):
    rng = np.random.default_rng(100 + seed)
    n = int(rng.integers(1, 4))
    S, _ = random_system(rng, n, int(rng.integers(1, 6)))
    p = rng.uniform(-0.1, 0.1, len(S))
    x = rng.uniform(-3, 3, n)
    ref = cvx_distance(S, p, x)
    assert distance_primal(S, p, x) == pytest.approx(ref, abs=1e-5 * (1 + ref))


@pytest.mark.parametrize("seed", range(4))
def test_dual_brackets_primal(seed):
    rng = np.random.default_rng(200 + seed)
    n = int(rng.integers(1, 4))
    S, _ = random_system(rng, n, int(rng.integers(1, 8)))
    for _ in range(3):
        x = rng.uniform(-3, 3, n)
        d = distance_dual_detail(S, None, x)
        pr = distance_primal(S, None, x)
        assert d.value <= pr + 1e-6
        assert pr <= d.value + d.gap + 1e-6
        assert d.residual_gap >= 0


def test_lip_example1_values():
    s = builtin("example1_countable", N=10)
    m = lip_bound(s.system, s.xbar)
    assert m.mode == MODE_COMPUTED
    assert m.lip_value == pytest.approx(1 / math.sqrt(2), abs=1e-12)
    assert m.attained
    assert m.reconstruction_error <= 1e-12
    assert [e.epsilon for e in m.eps_diagnostics] == [1.0, 0.5, 0.1, 0.01, 0.0]
    c = builtin("example1_countable", N=10, with_closure=True)
    mc = lip_bound(c.system, c.xbar, closure_points=c.closure_points, justification=c.closure_justification)
    assert mc.lip_value == pytest.approx(1.0, abs=1e-12)
    assert not mc.attained


def test_lip_modes():
    s = builtin("example2_unbounded", M=10)
    assert lip_bound(s.system, s.xbar).mode == MODE_SLATER
    # x <= 0 and -x <= 0 at 0: the origin lies on the slice, the infimum is zero
    S = InequalitySystem([Affine([1.0], 0.0), Affine([-1.0], 0.0)])
    with pytest.raises(SSCViolationError):
        lip_bound(S, [0.0])
    # slice empty: a single constraint strictly inactive away from the boundary of its cloud
    T = InequalitySystem([Affine([1.0], 1.0)])
    m = lip_bound(T, [1.0])
    assert m.mode == MODE_COMPUTED and m.lip_value == pytest.approx(1.0)
    assert lip_bound(T, [-3.0]).mode in (MODE_SLATER, MODE_EMPTY)


def test_lip_rejects_infeasible_reference():
    with pytest.raises(InfeasiblePointError):
        lip_bound(disk(), [2.0, 0.0])


def test_coderivative_parabola():
    s = builtin("parabola")
    assert coderivative_norm(s.system, s.xbar) == pytest.approx(0.5, abs=1e-12)
    # normals to the graph at (0, 1) are mu * (-1, 2), so x* = -2 mu pairs with p* = -mu
    ok, dist, _ = coderivative_member(s.system, s.xbar, [-1.0], [-2.0])
    assert ok and dist <= 1e-9
    ok, dist, _ = coderivative_member(s.system, s.xbar, [1.0], [-2.0])
    assert not ok and dist > 1e-3


def test_coderivative_example1_member():
    s = builtin("example1_countable", N=3)
    p_star = np.zeros(4)
    p_star[0] = -2.0
    ok, _, w = coderivative_member(s.system, s.xbar, p_star, [-2.0, -2.0])
    assert ok
    assert w.mu.sum() > 0


def test_quotient_conventions():
    S = disk()
    assert quotient_sample(S, None, [0.0, 0.0]).ratio == 0.0
    q = quotient_sample(S, None, [2.0, 0.0])
    assert q.ratio == pytest.approx(1.0 / 3.0, abs=1e-7)
    empty = quotient_sample(S, [-2.0], [0.0, 0.0])
    assert empty.numerator == math.inf and empty.ratio == math.inf


@settings(max_examples=30, deadline=None)
@given(st.floats(-0.5, 0.5), st.floats(0.0, 3.0))
def test_parabola_quotient_matches_closed_form(p, x):
    S = builtin("parabola").system
    q = quotient_sample(S, [p], [x])
    assert q.ratio == pytest.approx(float(parabola_quotient(p, x)), rel=1e-6, abs=1e-9)


def test_lip_sample_deterministic_and_thread_independent():
    s = builtin("example1_countable", N=5)
    a = lip_sample(s.system, s.xbar, radii=(0.01,), samples=200, seed=3)
    b = lip_sample(s.system, s.xbar, radii=(0.01,), samples=200, seed=3, threads=4)
    assert a == b
    assert a[0].max_ratio <= 1 / math.sqrt(2) + 1e-6


def test_lip_sample_bounded_by_lip_on_random_polyhedra():
    rng = np.random.default_rng(5)
    for _ in range(3):
        S, x0 = random_system(rng, 2, 5, ("affine", "max_affine"))
        xb = boundary_point(S, rng, x0)
        lip = lip_bound(S, xb).lip_value
        rows = lip_sample(S, xb, radii=(1e-4, 1e-6), samples=300, seed=1)
        assert all(r.max_ratio <= lip + 1e-6 for r in rows)


def test_coderivative_member_halfspace():
    S = InequalitySystem([Affine([1.0, 1.0], 0.0)])
    xbar = np.zeros(2)
    ok, dist, _ = coderivative_member(S, xbar, [0.0], [0.0, 0.0])
    assert ok and dist == 0.0
    # generators are (-1, 1, 1, 0): p* = -2 pairs with x* = -2 (1, 1)
    ok, _, w = coderivative_member(S, xbar, [-2.0], [-2.0, -2.0])
    assert ok and w.mu.sum() == pytest.approx(2.0)
    ok, _, _ = coderivative_member(S, xbar, [-2.0], [2.0, 2.0])
    assert not ok
    ok, dist, _ = coderivative_member(S, xbar, [0.0], [-1.0, -1.0])
    assert not ok and dist > 0


def test_lip_sample_skips_noise_level_residuals():
    s = builtin("parabola")
    row = lip_sample(s.system, s.xbar, radii=(1e-15,), samples=200, seed=0)[0]
    assert row.unresolved > 0 and row.nonzero == 0 and row.max_ratio == 0.0


def test_duplicate_constraint_leaves_lip_unchanged():
    rng = np.random.default_rng(31)
    for _ in range(4):
        S, x0 = random_system(rng, 2, 4)
        xb = boundary_point(S, rng, x0)
        D = InequalitySystem(list(S.functions) + [S.functions[0]])
        assert lip_bound(D, xb).lip_value == pytest.approx(lip_bound(S, xb).lip_value, abs=1e-9)


def test_zero_modulus_soundness():
    # interior reference point: x <= 1 at xbar = 0 has slack 1, so radii below 1/2 give zero quotients
    S = InequalitySystem([Affine([1.0], 1.0), Affine([-2.0], 1.0)])
    assert lip_bound(S, [0.0]).mode == MODE_SLATER
    rows = lip_sample(S, [0.0], radii=(0.2, 0.05), samples=300, seed=0)
    assert all(r.max_ratio == 0.0 for r in rows)


def test_ssc_routes_agree_on_builtins():
    for name, kw in [("example1_countable", {}), ("example1_countable", {"with_closure": True}),
                     ("example2_unbounded", {}), ("parabola", {}), ("parabola_raw", {})]:
        s = builtin(name, **kw)
        assert check_ssc(s.system, s.grids, s.closure_points, s.closure_justification).routes_agree
