"""Acceptance criteria, one test each; the terminal summary prints a PASS/FAIL line per criterion."""

import math
import subprocess
import sys
import time

import numpy as np
import pytest

from helpers import (boundary_point, brute_min_norm, criterion, grid_minimize, parabola_quotient,
                     random_system)
from sipstab.charset import build_characteristic
from sipstab.convex_core import Affine, GridConfig, InequalitySystem, MaxAffine, Quadratic
from sipstab.minnorm import min_norm_point
from sipstab.optimality import ConsequenceQuery, check_stationarity_smooth, farkas_consequence, \
    sample_feasible_points
from sipstab.scenario_io import builtin
from sipstab.stability import (MODE_EMPTY, MODE_SLATER, coderivative_norm, distance_dual_detail,
                               distance_primal, lip_bound, lip_sample)

SQRT_HALF = 1.0 / math.sqrt(2.0)


def random_ssc_scenarios(seed, count, classes=("affine", "quadratic", "max_affine"), max_n=3, max_size=8):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        n = int(rng.integers(1, max_n + 1))
        S, x0 = random_system(rng, n, int(rng.integers(1, max_size + 1)), classes)
        out.append((S, x0, rng))
    return out


def random_anchored(seed, count, classes=("affine", "quadratic", "max_affine")):
    """Random SSC systems with a boundary reference point."""
    return [(S, boundary_point(S, rng, x0)) for S, x0, rng in random_ssc_scenarios(seed, count, classes)]


def test_criterion_01_example1_regression():
    with criterion(1, "Example 1 lip = 1/sqrt2, with closure 1") as box:
        t0 = time.perf_counter()
        worst_plain = worst_closure = 0.0
        for N in (3, 10, 50):
            s = builtin("example1_countable", N=N)
            worst_plain = max(worst_plain, abs(lip_bound(s.system, s.xbar).lip_value - SQRT_HALF))
            c = builtin("example1_countable", N=N, with_closure=True)
            v = lip_bound(c.system, c.xbar, closure_points=c.closure_points,
                          justification=c.closure_justification).lip_value
            worst_closure = max(worst_closure, abs(v - 1.0))
        elapsed = time.perf_counter() - t0
        box["detail"] = (f"max |lip - 1/sqrt2| = {worst_plain:.2e}, max |lip_closure - 1| = {worst_closure:.2e}, "
                         f"{elapsed:.2f} s")
        assert worst_plain <= 1e-9 and worst_closure <= 1e-9
        assert elapsed < 5.0


def test_criterion_02_example2_regression():
    with criterion(2, "Example 2 lip = 0, sampled ratios <= 2/M") as box:
        t0 = time.perf_counter()
        parts = []
        for M in (10, 100):
            s = builtin("example2_unbounded", M=M)
            m = lip_bound(s.system, s.xbar)
            assert m.lip_value == 0.0 and m.mode in (MODE_SLATER, MODE_EMPTY)
            radii = tuple(r for r in s.sampling.radii if r < 1.0 / (2 * M))
            assert radii
            rows = lip_sample(s.system, s.xbar, radii, seed=0)
            worst = max(r.max_ratio for r in rows)
            parts.append(f"M={M}: mode {m.mode}, max ratio {worst:.4g} <= {2 / M:.4g}")
            assert worst <= 2.0 / M
        elapsed = time.perf_counter() - t0
        box["detail"] = "; ".join(parts) + f"; {elapsed:.2f} s"
        assert elapsed < 30.0


def test_criterion_03_parabola_modulus():
    with criterion(3, "parabola lip = 0.5 against brute-force quotient grid") as box:
        t0 = time.perf_counter()
        sups = []
        for h in (1e-1, 1e-2, 1e-3, 1e-4, 1e-5):
            P, X = np.meshgrid(np.linspace(-h, h, 200), np.linspace(1 - h, 1 + h, 200))
            sups.append(float(np.max(parabola_quotient(P, X))))
        errs = [abs(v - 0.5) for v in sups]
        s = builtin("parabola")
        lip = lip_bound(s.system, s.xbar).lip_value
        elapsed = time.perf_counter() - t0
        box["detail"] = (f"grid sups {', '.join(f'{v:.7f}' for v in sups)}; lip_bound {lip!r}; "
                         f"{elapsed:.2f} s")
        assert all(b < a for a, b in zip(errs, errs[1:]))
        assert errs[-1] <= 1e-5
        assert abs(lip - 0.5) <= 1e-6
        assert elapsed < 10.0


def test_criterion_04_dual_primal_distance():
    with criterion(4, "dual vs primal distance on 25 random SSC scenarios") as box:
        t0 = time.perf_counter()
        worst_excess, checked = -np.inf, 0
        for S, _, rng in random_ssc_scenarios(2024, 25):
            for _ in range(5):
                x = rng.uniform(-3, 3, S.n)
                p = rng.uniform(-0.1, 0.1, len(S))
                d = distance_dual_detail(S, p, x)
                pr = distance_primal(S, p, x)
                worst_excess = max(worst_excess, abs(d.value - pr) - d.gap)
                checked += 1
                assert abs(d.value - pr) <= 1e-5 + d.gap, (d.value, pr, d.gap)
        elapsed = time.perf_counter() - t0
        box["detail"] = f"{checked} probes, max(|dual - primal| - gap) = {worst_excess:.2e}, {elapsed:.2f} s"
        assert elapsed < 60.0


def test_criterion_05_min_norm_brute_force():
    with criterion(5, "min_norm_point vs brute force on 200 clouds") as box:
        rng = np.random.default_rng(5)
        clouds = [rng.normal(size=(int(rng.integers(1, 9)), int(rng.integers(1, 5)))) * rng.uniform(0.1, 10)
                  for _ in range(200)]
        t0 = time.perf_counter()
        worst = 0.0
        for P in clouds:
            z, _ = min_norm_point(P)
            worst = max(worst, abs(np.linalg.norm(z) - brute_min_norm(P)))
        elapsed = time.perf_counter() - t0
        box["detail"] = f"max deviation {worst:.2e}, {elapsed:.2f} s"
        assert worst <= 1e-8
        assert elapsed < 10.0


def _builtin_systems():
    out = []
    for N in (3, 10, 50):
        out.append(builtin("example1_countable", N=N))
        out.append(builtin("example1_countable", N=N, with_closure=True))
    out += [builtin("example2_unbounded", M=10), builtin("example2_unbounded", M=100), builtin("parabola")]
    return out


def test_criterion_06_coderivative_norm_equals_lip():
    with criterion(6, "coderivative_norm = lip_bound on builtins and random scenarios") as box:
        worst, count = 0.0, 0
        for s in _builtin_systems():
            kw = dict(closure_points=s.closure_points, justification=s.closure_justification)
            a = lip_bound(s.system, s.xbar, **kw).lip_value
            b = coderivative_norm(s.system, s.xbar, **kw)
            worst = max(worst, abs(a - b))
            count += 1
        for S, xb in random_anchored(606, 15):
            worst = max(worst, abs(lip_bound(S, xb).lip_value - coderivative_norm(S, xb)))
            count += 1
        box["detail"] = f"{count} scenarios, max |difference| {worst:.2e}"
        assert worst <= 1e-9


def test_criterion_07_sampled_ratios_below_bound():
    with criterion(7, "lip_sample ratios <= lip_bound + 1e-6") as box:
        cases = []
        e1 = builtin("example1_countable", N=10)
        cases.append(("example1 N=10", e1.system, e1.xbar, (0.01, 0.001)))
        for M in (10, 100):
            e2 = builtin("example2_unbounded", M=M)
            # below 1/(M(M+1)) the reference point stays feasible for every admissible perturbation
            cases.append((f"example2 M={M}", e2.system, e2.xbar, (0.5 / (M * (M + 1)),)))
        pb = builtin("parabola")
        cases.append(("parabola", pb.system, pb.xbar, (1e-6, 1e-7)))
        for k, (S, xb) in enumerate(random_anchored(77, 8)):
            cases.append((f"random[{k}]", S, xb, (1e-6, 1e-7)))
        worst = -np.inf
        for name, S, xb, radii in cases:
            lip = lip_bound(S, xb).lip_value
            for row in lip_sample(S, xb, radii, samples=300, seed=1):
                worst = max(worst, row.max_ratio - lip)
                assert row.max_ratio <= lip + 1e-6, (name, row.radius, row.max_ratio, lip)
        r = lip_sample(e1.system, e1.xbar, (0.01,), seed=0)[0].max_ratio
        box["detail"] = (f"{len(cases)} scenarios, max(ratio - lip) = {worst:.2e}; "
                         f"example1 N=10 r=0.01 max ratio {r:.10f}")
        assert abs(r - SQRT_HALF) <= 0.1 * SQRT_HALF


def test_criterion_08_farkas():
    with criterion(8, "Farkas consequences: constructed hold, violated rejected, soundness") as box:
        rng = np.random.default_rng(808)
        grid = GridConfig(-3, 3, 7)
        holds_n = rejected_n = 0
        worst_res = 0.0
        systems = [random_system(rng, int(rng.integers(1, 4)), int(rng.integers(2, 7)), cls)[0]
                   for cls in [("affine",), ("affine", "max_affine"), ("affine", "quadratic", "max_affine")] * 4]
        for S in systems:
            cloud = build_characteristic(S, None, grid)
            for _ in range(3):
                mu = rng.exponential(size=len(cloud)) * (rng.random(len(cloud)) < 0.5)
                if mu.sum() == 0:
                    mu[0] = 1.0
                comb = mu @ cloud.points
                q = ConsequenceQuery(comb[:-1], comb[-1] + rng.uniform(0.0, 1.0))
                r = farkas_consequence(S, None, q, grid, soundness_samples=1000, seed=holds_n)
                worst_res = max(worst_res, r.residual)
                assert r.holds and r.residual <= 1e-9, r.residual
                assert r.soundness is not None and r.soundness.points == 1000 and r.soundness.passed
                holds_n += 1
            X = sample_feasible_points(S, None, 20, seed=1)
            for x in X[:3]:
                v = rng.normal(size=S.n)
                q = ConsequenceQuery(v, float(v @ x) - 0.05)
                assert not farkas_consequence(S, None, q, grid).holds
                rejected_n += 1
        box["detail"] = (f"{holds_n} constructed queries hold (max residual {worst_res:.1e}, soundness passed), "
                         f"{rejected_n} violated queries rejected")


def _stationarity_problems():
    """(system, w, c, H): minimize <w, p> + <c, x> + x'Hx/2 over the graph of F."""
    return [
        (InequalitySystem([Quadratic([[2.0]], [0.0], -1.0)]), np.array([1.0]), np.array([-2.0]), np.zeros((1, 1))),
        (InequalitySystem([Quadratic(2 * np.eye(2), [0, 0], -1.0), Affine([1.0, 1.0], 0.5)]),
         np.array([1.0, 2.0]), np.array([-3.0, 1.0]), 0.5 * np.eye(2)),
        (InequalitySystem([MaxAffine([[1, 0], [-1, 0], [0, 1], [0, -1]], [1, 1, 1, 1]),
                           Quadratic([[2, 0], [0, 0]], [0, -1.0], 0.0)]),
         np.array([1.5, 0.5]), np.array([0.7, -2.0]), np.eye(2)),
        (InequalitySystem([Quadratic(np.diag([2.0, 1, 0.5]), [0, 0, 0], -2.0), Affine([1, -1, 0.5], 1.0),
                           MaxAffine([[1, 1, 0], [0, -1, 1]], [0.5, 0.2])]),
         np.ones(3), np.array([-1.0, 2, -0.5]), 0.3 * np.eye(3)),
        (InequalitySystem([Affine([1.0, 0], 1.0), Affine([0.0, 1], 1.0), Affine([-1.0, -1], 1.0)]),
         np.array([0.5, 1.0, 2.0]), np.array([-1.0, -1]), np.array([[1.0, 0.2], [0.2, 0.5]])),
    ]


def test_criterion_09_stationarity_at_brute_force_minimizers():
    with criterion(9, "stationarity residual at brute-force minimizers and perturbed points") as box:
        rng = np.random.default_rng(909)
        at_min, away = 0.0, np.inf
        for S, w, c, H in _stationarity_problems():
            # with p_t = f_t(x) the objective reduces to psi(x) over x alone
            psi = lambda x: float(w @ S.values(x) + c @ x + 0.5 * x @ H @ x)  # noqa: E731
            xs = grid_minimize(psi, np.zeros(S.n), 4.0, S.n, levels=45, num=11 if S.n == 3 else 21)
            cert = check_stationarity_smooth(S.shifted(S.values(xs)), xs, w, c + H @ xs)
            at_min = max(at_min, cert.residual)
            assert cert.residual <= 1e-6, cert.residual
            for _ in range(4):
                d = rng.normal(size=S.n)
                x2 = xs + 0.3 * d / np.linalg.norm(d)
                c2 = check_stationarity_smooth(S.shifted(S.values(x2)), x2, w, c + H @ x2)
                away = min(away, c2.residual)
                assert c2.residual > 1e-3, c2.residual
        box["detail"] = f"max residual at minimizers {at_min:.2e}, min residual at perturbed points {away:.2e}"


def test_criterion_10_cli_determinism(tmp_path):
    with criterion(10, "run --builtin example1_countable --seed 7 is byte-identical") as box:
        cmd = [sys.executable, "-m", "sipstab.cli", "run", "--builtin", "example1_countable", "--seed", "7"]
        a = subprocess.run(cmd, capture_output=True, check=True).stdout
        b = subprocess.run(cmd, capture_output=True, check=True).stdout
        box["detail"] = f"{len(a)} bytes, identical={a == b}"
        assert a == b and len(a) > 0
