import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mvnav.costs import CostWeights, Margins, Scenario, evaluate
from mvnav.kinematics import KinematicParams
from mvnav.optimizer import (MPCController, SolverConfig, WarmStart, benchmark_step, minimize_box, optimize,
                             shift_warm_start)
from mvnav.simulation import SimConfig, run_closed_loop


def test_shift_examples():
    a, b, c = np.full((1, 2), 1.0), np.full((1, 2), 2.0), np.full((1, 2), 3.0)
    out = shift_warm_start(np.stack([a, b, c]))
    assert np.array_equal(out, np.stack([b, c, c]))
    one = np.ones((1, 2, 2))
    assert np.array_equal(shift_warm_start(one), one)
    assert np.array_equal(shift_warm_start(np.zeros((4, 3, 2))), np.zeros((4, 3, 2)))


def test_warm_start_validation():
    with pytest.raises(ValueError):
        WarmStart("nope")
    with pytest.raises(ValueError):
        WarmStart("policy_prediction")


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_box_quadratic_matches_closed_form(seed):
    # separable quadratic: the box minimiser is the clipped unconstrained one
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 20))
    a = rng.uniform(0.5, 5.0, n)
    c = rng.uniform(-2, 2, n)
    lo, hi = -np.ones(n), np.ones(n)
    f = lambda x: (float(np.sum(a * (x - c) ** 2)), 2 * a * (x - c), None)
    seen = []
    x, fx, _, it, _, reason = minimize_box(f, rng.uniform(-1, 1, n), lo, hi, SolverConfig(g_tol=1e-10, f_tol=0),
                                           callback=lambda x, fv: seen.append((x.copy(), fv)))
    assert np.allclose(x, np.clip(c, lo, hi), atol=1e-6)
    fs = [fv for _, fv in seen]
    assert all(b <= a for a, b in zip(fs, fs[1:]))
    assert all(np.all(xi >= lo) and np.all(xi <= hi) for xi, _ in seen)


def test_rosenbrock_box():
    def f(x):
        v = (1 - x[0]) ** 2 + 100 * (x[1] - x[0] ** 2) ** 2
        g = np.array([-2 * (1 - x[0]) - 400 * x[0] * (x[1] - x[0] ** 2), 200 * (x[1] - x[0] ** 2)])
        return v, g, None
    x, fx, *_ = minimize_box(f, np.array([-1.2, 1.0]), np.array([-2.0, -2.0]), np.array([0.5, 2.0]),
                             SolverConfig(g_tol=1e-9, f_tol=0, max_iter=500))
    # constrained optimum lies on x0 = 0.5, x1 = 0.25
    assert np.allclose(x, [0.5, 0.25], atol=1e-5)


def test_at_target_zero_plan_is_optimal():
    sc = Scenario([[2, 3, 0.5, 0]], [[2, 3, 0.5]])
    r = optimize(sc, sc.starts, WarmStart.zeros())
    assert np.max(np.abs(r.controls)) < 1e-6
    assert r.final_cost < 1e-6 and r.iterations == 0


def test_straight_ahead_plan_and_closed_loop():
    sc = Scenario([[0, 0, 0, 0]], [[5, 0, 0]])
    r = optimize(sc, sc.starts, WarmStart.zeros())
    zero = evaluate(np.zeros_like(r.controls), sc)
    assert evaluate(r.controls, sc).target < zero.target
    log = run_closed_loop(MPCController(), sc, SimConfig(max_steps=120))
    assert log.reached[0] and not log.events


def test_head_on_pair_reduces_collision_cost():
    sc = Scenario([[-3, 0, 0, 1.0], [3, 0, math.pi, 1.0]], [[6, 0, 0], [-6, 0, math.pi]])
    r = optimize(sc, sc.starts, WarmStart.zeros())
    before = evaluate(np.zeros_like(r.controls), sc)
    after = evaluate(r.controls, sc)
    assert before.vehicle_collision > 0
    assert after.vehicle_collision < before.vehicle_collision


def test_controls_stay_in_box_and_cost_never_rises():
    rng = np.random.default_rng(5)
    prm = KinematicParams()
    for _ in range(10):
        n = int(rng.integers(1, 4))
        starts = np.column_stack([rng.uniform(-8, 8, (n, 2)), rng.uniform(-3, 3, n), rng.uniform(-1, 1, n)])
        sc = Scenario(starts, np.column_stack([rng.uniform(-8, 8, (n, 2)), rng.uniform(-3, 3, n)]))
        init = WarmStart.policy(np.stack([rng.uniform(-1, 1, (10, n)), rng.uniform(-0.7, 0.7, (10, n))], -1))
        r = optimize(sc, sc.starts, init)
        assert np.all(np.abs(r.controls[..., 0]) <= prm.pedal_max)
        assert np.all(np.abs(r.controls[..., 1]) <= prm.phi_max)
        assert r.final_cost <= r.initial_cost


def test_determinism_excluding_wall_time():
    sc = Scenario([[-4, 1, 0.2, 0], [4, -1, 2.0, 0.5]], [[4, 2, 0], [-4, -2, 3.0]])
    a = optimize(sc, sc.starts, WarmStart.zeros())
    b = optimize(sc, sc.starts, WarmStart.zeros())
    assert np.array_equal(a.controls, b.controls)
    assert (a.final_cost, a.iterations, a.n_evals, a.reason) == (b.final_cost, b.iterations, b.n_evals, b.reason)


def test_benchmark_identical_inits():
    sc = Scenario([[-4, 1, 0.2, 0], [4, -1, 2.0, 0.5]], [[4, 2, 0], [-4, -2, 3.0]])
    r = benchmark_step(sc, sc.starts, WarmStart.zeros(), WarmStart.zeros(), repeats=5)
    assert r["iterations_a"] == r["iterations_b"] and r["cost_a"] == r["cost_b"]
    assert 0.3 < r["ratio"] < 3.0


def test_mpc_controller_reset_and_shape():
    sc = Scenario([[0, 0, 0, 0], [5, 5, 1, 0]], [[3, 0, 0], [5, 8, 1]])
    c = MPCController()
    u = c(sc, sc.starts)
    assert u.shape == (2, 2) and c.previous.shape == (10, 2, 2)
    c.reset()
    assert c.previous is None
