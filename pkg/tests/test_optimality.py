import numpy as np
import pytest

from helpers import grid_minimize
from sipstab.convex_core import Affine, InequalitySystem, MaxAffine, Quadratic
from sipstab.errors import InfeasiblePointError, InfeasibleSystemError
from sipstab.optimality import (ConsequenceQuery, check_stationarity_smooth, check_stationarity_upper,
                                farkas_consequence, normal_cone_member, sample_feasible_points)
from sipstab.scenario_io import builtin


def box():
    return InequalitySystem([Affine([1.0, 0.0], 1.0), Affine([-1.0, 0.0], 1.0),
                             Affine([0.0, 1.0], 1.0), Affine([0.0, -1.0], 1.0)])


def test_farkas_box_consequences():
    S = box()
    assert farkas_consequence(S, None, ConsequenceQuery([1.0, 1.0], 2.0)).holds
    assert farkas_consequence(S, None, ConsequenceQuery([1.0, 1.0], 3.0)).holds
    res = farkas_consequence(S, None, ConsequenceQuery([1.0, 1.0], 1.9))
    assert not res.holds and res.residual > 1e-3
    holds, residual, w = farkas_consequence(S, None, ConsequenceQuery([2.0, 0.0], 2.0))
    assert holds and residual <= 1e-9 and w.mu.sum() > 0


def test_farkas_parameter_shifts_bound():
    S = box()
    p = np.array([0.5, 0.0, 0.0, 0.0])
    assert not farkas_consequence(S, p, ConsequenceQuery([1.0, 0.0], 1.0)).holds
    assert farkas_consequence(S, p, ConsequenceQuery([1.0, 0.0], 1.5)).holds


def test_farkas_quadratic_with_soundness():
    S = InequalitySystem([Quadratic(2 * np.eye(2), [0.0, 0.0], -1.0)])  # unit disk
    x0 = np.array([np.sqrt(0.5), np.sqrt(0.5)])
    # tangent line at x0 is a consequence once x0 is sampled
    r = farkas_consequence(S, None, ConsequenceQuery(x0, 1.0), extra_points=x0, soundness_samples=500)
    assert r.holds and r.soundness.passed and r.soundness.points == 500
    assert not farkas_consequence(S, None, ConsequenceQuery(x0, 0.9), extra_points=x0).holds


def test_farkas_errors():
    S = box()
    with pytest.raises(InfeasibleSystemError):
        farkas_consequence(S, [-1.5, -1.5, 0, 0], ConsequenceQuery([1.0, 0.0], 0.0))
    with pytest.raises(ValueError):
        farkas_consequence(S, None, ConsequenceQuery([1.0], 0.0))
    with pytest.raises(ValueError):
        ConsequenceQuery([np.nan, 0.0], 0.0)


def test_sampled_points_are_feasible_and_reach_boundary():
    S = InequalitySystem([Quadratic(2 * np.eye(2), [0.0, 0.0], -1.0)])
    X = sample_feasible_points(S, None, 200, seed=4)
    r = np.linalg.norm(X, axis=1)
    assert np.all(S.values(X)[:, 0] <= 1e-12)
    assert np.max(r) == pytest.approx(1.0, abs=1e-9)
    assert np.array_equal(X, sample_feasible_points(S, None, 200, seed=4))


def test_normal_cone_box_corner():
    S = box()
    corner = np.array([1.0, 1.0])
    assert normal_cone_member(S, corner, [1.0, 2.0]).holds
    assert not normal_cone_member(S, corner, [-1.0, 1.0]).holds
    with pytest.raises(InfeasiblePointError):
        normal_cone_member(S, [2.0, 0.0], [1.0, 0.0])


def test_stationarity_parabola():
    s = builtin("parabola")
    cert = check_stationarity_smooth(s.system, s.xbar, [1.0], [-2.0])
    assert cert.satisfied and cert.residual <= 1e-9
    assert cert.multipliers == pytest.approx([1.0])
    bad = check_stationarity_smooth(s.system, s.xbar, [1.0], [2.0])
    assert bad.status == "violated"


def test_stationarity_multipliers_sum_per_index():
    # objective p_1 + 2x over x <= p_0 + 1 and max(-x - 1, -2x - 1) <= p_1
    S = InequalitySystem([Affine([1.0], 1.0), MaxAffine([[-1.0], [-2.0]], [1.0, 1.0])])
    # at x = -1/2 only the second piece is active: -2x - 1 = 0
    xbar = np.array([-0.5])
    cert = check_stationarity_smooth(S, xbar, [0.0, 1.0], [2.0])
    assert cert.satisfied
    assert cert.multipliers == pytest.approx([0.0, 1.0], abs=1e-9)


def test_stationarity_brute_force_minimizer():
    S = InequalitySystem([Quadratic(2 * np.eye(2), [0.0, 0.0], -1.0), Affine([1.0, 1.0], 0.5)])
    w = np.array([1.0, 2.0])
    c = np.array([-3.0, 1.0])
    psi = lambda x: float(w @ S.values(x) + c @ x + 0.25 * x @ x)
    xs = grid_minimize(psi, np.zeros(2), 4.0, 2, levels=45)
    shifted = S.shifted(S.values(xs))
    cert = check_stationarity_smooth(shifted, xs, w, c + 0.5 * xs)
    assert cert.residual <= 1e-6
    x2 = xs + np.array([0.3, 0.0])
    cert2 = check_stationarity_smooth(S.shifted(S.values(x2)), x2, w, c + 0.5 * x2)
    assert cert2.residual > 1e-3


def test_upper_stationarity():
    s = builtin("parabola")
    empty = check_stationarity_upper(s.system, s.xbar, [])
    assert empty.vacuous and empty.all_satisfied
    up = check_stationarity_upper(s.system, s.xbar, [([1.0], [-2.0]), ([2.0], [-4.0])])
    assert up.all_satisfied and len(up.certificates) == 2
    up = check_stationarity_upper(s.system, s.xbar, [([1.0], [-2.0]), ([1.0], [1.0])])
    assert not up.all_satisfied
