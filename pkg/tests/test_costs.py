import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mvnav import _kernels_py
from mvnav._backend import BACKEND, kernels
from mvnav.costs import (CostWeights, Margins, Scenario, evaluate, evaluate_states, obstacle_collision_cost,
                         reference_gradient, target_cost, total_cost, total_cost_gradient, vehicle_collision_cost,
                         velocity_cost)
from mvnav.kinematics import KinematicParams, rollout

import oracles

UNIT = CostWeights(1, 1, 1, 1, 1)


def states_of(*rows):
    """Stack per-timestep vehicle rows; row 0 is a dummy initial row."""
    arr = np.array(rows, dtype=float)
    return np.concatenate([arr[:1], arr])


# -- hand evaluations ----------------------------------------------------------

def test_target_zero_at_target():
    sc = Scenario([[1, 2, 0.3, 0]], [[1, 2, 0.3]])
    assert target_cost(np.repeat(sc.starts[None], 4, 0), sc) == 0.0


def test_target_fixed_offset_two_steps():
    sc = Scenario([[4, 0, 0, 0]], [[1, 0, 0]])
    s = np.repeat(sc.starts[None], 3, 0)
    assert abs(target_cost(s, sc, UNIT) - 6.0) < 1e-9


def test_target_heading_error_pi():
    sc = Scenario([[0, 0, math.pi, 0]], [[0, 0, 0]])
    s = np.repeat(sc.starts[None], 2, 0)
    assert abs(target_cost(s, sc, CostWeights(1, 2, 1, 1, 1)) - 2 * math.pi) < 1e-9


def test_vehicle_collision_examples():
    m = Margins(r_mar_veh=2.0)
    s = states_of([[0, 0, 0, 0], [1, 0, 0, 0]])
    assert abs(vehicle_collision_cost(s, m, UNIT) - 0.5) < 1e-9
    h = math.sqrt(3) / 2
    s3 = states_of([[0, 0, 0, 0], [1, 0, 0, 0], [0.5, h, 0, 0]])
    assert abs(vehicle_collision_cost(s3, m, UNIT) - 1.5) < 1e-9
    far = states_of([[0, 0, 0, 0], [2, 0, 0, 0]])
    assert vehicle_collision_cost(far, m, UNIT) == 0.0


def test_vehicle_collision_clamp_flag():
    diag = {}
    s = states_of([[0, 0, 0, 0], [0, 0, 0, 0]])
    c = vehicle_collision_cost(s, Margins(), UNIT, diagnostics=diag)
    assert diag["clamped"] and math.isfinite(c)


def test_obstacle_collision_examples():
    s = states_of([[3, 0, 0, 0]])
    obs = [[0, 0, 1]]
    assert abs(obstacle_collision_cost(s, obs, Margins(r_mar_obs=4), UNIT) - 0.25) < 1e-9
    assert obstacle_collision_cost(s, obs, Margins(r_mar_obs=2), UNIT) == 0.0
    diag = {}
    obstacle_collision_cost(states_of([[0.5, 0, 0, 0]]), obs, Margins(), UNIT, diagnostics=diag)
    assert diag["clamped"]


def test_velocity_examples():
    m = Margins(v_mar=2)
    assert abs(velocity_cost(states_of([[0, 0, 0, 3]]), m, UNIT) - 1.0) < 1e-9
    assert abs(velocity_cost(states_of([[0, 0, 0, -3]]), m, UNIT) - 1.0) < 1e-9
    assert velocity_cost(states_of([[0, 0, 0, 1.5]]), m, UNIT) == 0.0


def test_kernel_terms_match_hand_values():
    # stationary controls: every timestep sees the same geometry
    sc = Scenario([[0, 0, 0, 0], [1, 0, 0, 0]], [[0, 0, 0], [1, 0, 0]], [[1, 3, 1]])
    ev = evaluate(np.zeros((2, 2, 2)), sc, KinematicParams(), UNIT, Margins(2, 4, 2))
    assert abs(ev.vehicle_collision - 2 * 0.5) < 1e-9
    # vehicle 0 gap sqrt(10)-1, vehicle 1 gap 2
    expect_obs = 2 * ((1 / (math.sqrt(10) - 1) - 0.25) + (0.5 - 0.25))
    assert abs(ev.obstacle_collision - expect_obs) < 1e-9
    assert ev.target == 0.0 and ev.velocity == 0.0


# -- oracle agreement ------------------------------------------------------------

def random_instance(rng, n=None, m=None, H=None, spread=5.0):
    n = n or int(rng.integers(1, 5))
    m = int(rng.integers(0, 3)) if m is None else m
    H = H or int(rng.integers(1, 8))
    starts = np.column_stack([rng.uniform(-spread, spread, (n, 2)), rng.uniform(-3, 3, n), rng.uniform(-2.5, 2.5, n)])
    targets = np.column_stack([rng.uniform(-spread, spread, (n, 2)), rng.uniform(-3, 3, n)])
    obs = np.column_stack([rng.uniform(-spread, spread, (m, 2)), rng.uniform(0.3, 1.0, m)])
    u = np.stack([rng.uniform(-1, 1, (H, n)), rng.uniform(-0.7, 0.7, (H, n))], axis=-1)
    return Scenario(starts, targets, obs), u


@pytest.mark.parametrize("seed", range(30))
def test_total_cost_matches_oracle(seed):
    rng = np.random.default_rng(seed)
    sc, u = random_instance(rng)
    ref = oracles.total(u.tolist(), sc.starts.tolist(), sc.targets.tolist(), sc.obstacles.tolist())
    got = total_cost(u, sc)
    assert abs(got - ref) <= 1e-9 * max(1.0, abs(ref))
    ev = evaluate_states(rollout(sc.starts, u, KinematicParams()), sc)
    assert abs(ev.total - ref) <= 1e-9 * max(1.0, abs(ref))


@pytest.mark.parametrize("seed", range(30))
def test_backends_agree(seed):
    rng = np.random.default_rng(1000 + seed)
    sc, u = random_instance(rng)
    args = (u, sc.starts, sc.targets, sc.obstacles, np.array([0.2, 0.95, 0.5]), CostWeights().as_array(),
            Margins().as_array(), 1e-3)
    t1, g1, c1 = kernels.cost_grad(*args)
    t2, g2, c2 = _kernels_py.cost_grad(*args)
    assert np.allclose(t1, t2, rtol=1e-12, atol=1e-12)
    assert np.allclose(g1, g2, rtol=1e-10, atol=1e-10)
    assert c1 == c2
    assert np.allclose(kernels.rollout(sc.starts, u, args[4]), rollout(sc.starts, u, KinematicParams()),
                       rtol=0, atol=1e-13)


def test_backend_name():
    assert BACKEND in ("cython", "python")


def _fd_gradient(sc, u, h=1e-5):
    flat = u.ravel().tolist()
    f = lambda x: oracles.total(np.array(x).reshape(u.shape).tolist(), sc.starts.tolist(), sc.targets.tolist(),
                                sc.obstacles.tolist())
    return np.array(oracles.central_diff(f, flat, h)).reshape(u.shape)


def away_from_boundaries(sc, u, tol=0.05):
    """True when no indicator or hinge sits within ``tol`` of its switching point."""
    s = rollout(sc.starts, u, KinematicParams())[1:]
    mar = Margins()
    n = sc.n_vehicles
    for i in range(n):
        if np.min(np.abs(np.abs(s[:, i, 3]) - mar.v_mar)) < tol:
            return False
        if np.min(np.linalg.norm(s[:, i, :2] - sc.targets[i, :2], axis=-1)) < tol:
            return False
        for j in range(i + 1, n):
            d = np.linalg.norm(s[:, i, :2] - s[:, j, :2], axis=-1)
            if np.min(np.abs(d - mar.r_mar_veh)) < tol or np.min(d) < 0.3:
                return False
        for o in sc.obstacles:
            gap = np.linalg.norm(s[:, i, :2] - o[:2], axis=-1) - o[2]
            if np.min(np.abs(gap - mar.r_mar_obs)) < tol or np.min(gap) < 0.3:
                return False
        dth = np.abs(oracles_wrap(s[:, i, 2] - sc.targets[i, 2]))
        if np.min(dth) < tol or np.max(dth) > math.pi - tol:
            return False
    return True


def oracles_wrap(a):
    return np.array([oracles.wrap(x) for x in np.ravel(a)]).reshape(np.shape(a))


def gradient_check_cases(count, n=2, H=5, spread=4.0, start=0):
    cases, seed = [], start
    while len(cases) < count:
        rng = np.random.default_rng(seed)
        seed += 1
        sc, u = random_instance(rng, n=n, m=int(rng.integers(0, 2)), H=H, spread=spread)
        if away_from_boundaries(sc, u):
            cases.append((sc, u))
    return cases


def rel_err(a, b):
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-8))


def test_gradient_matches_finite_differences_100_instances():
    worst = 0.0
    for sc, u in gradient_check_cases(100):
        g = total_cost_gradient(u, sc)
        worst = max(worst, rel_err(g, _fd_gradient(sc, u)))
    assert worst < 1e-5, worst


def test_reference_gradient_matches_active_backend():
    for sc, u in gradient_check_cases(10, n=3, H=6, start=500):
        assert np.allclose(reference_gradient(u, sc), total_cost_gradient(u, sc), rtol=1e-10, atol=1e-10)


def test_gradient_at_target_moves_off_target():
    # stationary at target: a positive first pedal drives the vehicle forward, raising the target cost
    sc = Scenario([[0, 0, 0, 0]], [[0, 0, 0]])
    u = np.zeros((3, 1, 2))
    u[0, 0, 0] = 1e-3
    g = total_cost_gradient(u, sc)
    fd = _fd_gradient(sc, u, h=1e-7)
    assert g[0, 0, 0] > 0 and fd[0, 0, 0] > 0
    assert abs(g[0, 0, 0] - fd[0, 0, 0]) < 1e-4 * abs(fd[0, 0, 0])


def test_velocity_gradient_independent_of_steering():
    # only the velocity term active: zero position/orientation weights, no neighbours
    w = CostWeights(0, 0, 0, 0, 10)
    rng = np.random.default_rng(3)
    for _ in range(20):
        sc = Scenario([[0, 0, 0.3, 2.5]], [[5, 5, 0]])
        u = np.stack([rng.uniform(-1, 1, 6), rng.uniform(-0.7, 0.7, 6)], -1).reshape(6, 1, 2)
        g = total_cost_gradient(u, sc, weights=w)
        assert np.all(g[..., 1] == 0)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_permutation_invariance_exact(seed):
    rng = np.random.default_rng(seed)
    sc, u = random_instance(rng, n=int(rng.integers(2, 6)))
    perm = rng.permutation(sc.n_vehicles)
    s = rollout(sc.starts, u, KinematicParams())
    sp = rollout(sc.starts[perm], u[:, perm], KinematicParams())
    assert np.array_equal(sp[:, np.argsort(perm)], s)
    a = evaluate(u, sc)
    b = evaluate(u[:, perm], sc.permuted(perm))
    for k in ("target", "vehicle_collision", "obstacle_collision", "velocity"):
        assert getattr(a, k) == getattr(b, k)
    assert a.total == b.total


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_all_terms_nonnegative(seed):
    rng = np.random.default_rng(seed)
    sc, u = random_instance(rng, spread=2.0)
    ev = evaluate(u, sc)
    assert min(ev.target, ev.vehicle_collision, ev.obstacle_collision, ev.velocity) >= 0


def test_vehicle_collision_monotone_in_distance():
    ds = np.linspace(0.01, 2.99, 300)
    vals = [vehicle_collision_cost(states_of([[0, 0, 0, 0], [d, 0, 0, 0]])) for d in ds]
    assert np.all(np.diff(vals) < 0)


def test_nonfinite_gradient_reports_location():
    from mvnav.errors import NonFiniteError
    sc = Scenario([[0, 0, 0, 0]], [[1, 1, 0]])
    u = np.zeros((3, 1, 2))
    u[1, 0, 0] = np.nan
    with pytest.raises(NonFiniteError, match="timestep"):
        total_cost_gradient(u, sc)
