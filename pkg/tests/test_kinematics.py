import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mvnav.errors import DimensionError
from mvnav.kinematics import Control, KinematicParams, VehicleState, rollout, step, wrap_angle

import oracles


def test_zero_state_zero_control_is_fixed_point():
    assert np.array_equal(step(np.zeros(4), np.zeros(2), KinematicParams()), np.zeros(4))


def test_hand_step_straight():
    prm = KinematicParams(dt=0.1, beta_decay=1.0, gamma_steer=1.0)
    out = step(np.array([0, 0, 0, 2.0]), np.zeros(2), prm)
    assert np.allclose(out, [0.2, 0, 0, 2], atol=1e-12, rtol=0)


def test_hand_step_turning():
    prm = KinematicParams(dt=0.1, beta_decay=0.9, gamma_steer=0.5)
    out = step(VehicleState(1, 1, math.pi / 2, 1), Control(1, math.pi / 4), prm)
    assert abs(out.x - 1) < 1e-12
    assert abs(out.y - 1.1) < 1e-12
    assert abs(out.theta - (math.pi / 2 + 0.05)) < 1e-12
    assert abs(out.v - 1.0) < 1e-12


def test_rollout_constant_pedal_speeds():
    prm = KinematicParams(dt=0.1, beta_decay=1.0)
    u = np.tile([1.0, 0.0], (3, 1, 1))
    s = rollout(np.zeros((1, 4)), u, prm)
    assert np.allclose(s[1:, 0, 3], [0.1, 0.2, 0.3], atol=1e-12, rtol=0)
    # x_{t+1} = x_t + v_t dt with v_0 = 0
    assert np.allclose(s[:, 0, 0], [0, 0, 0.01, 0.03], atol=1e-12, rtol=0)


def test_rollout_h1_is_one_step():
    prm = KinematicParams()
    s0 = np.array([[1.0, 2.0, 0.3, 0.5], [-1, 0, 2.0, 1.0]])
    u = np.array([[[0.5, 0.2], [-0.3, -0.1]]])
    assert np.array_equal(rollout(s0, u, prm)[1], step(s0, u[0], prm))


def test_stationary_zero_controls_constant():
    s0 = np.array([[3.0, -2.0, 1.0, 0.0]])
    s = rollout(s0, np.zeros((5, 1, 2)), KinematicParams())
    assert np.array_equal(s, np.repeat(s0[None], 6, axis=0))


def test_dimension_errors():
    with pytest.raises(DimensionError):
        rollout(np.zeros((2, 4)), np.zeros((3, 1, 2)), KinematicParams())
    with pytest.raises(DimensionError):
        step(np.zeros(4), np.zeros(3), KinematicParams())


def test_param_validation():
    with pytest.raises(ValueError):
        KinematicParams(dt=0)
    with pytest.raises(ValueError):
        KinematicParams(beta_decay=1.5)


def test_wrap_leaves_range_untouched_and_maps_into_range():
    a = np.array([0.1, -3.0, math.pi])
    assert np.array_equal(wrap_angle(a), a)
    b = wrap_angle(np.array([3 * math.pi, -math.pi, 7.0, -7.0]))
    assert np.all(b > -math.pi) and np.all(b <= math.pi)
    assert np.allclose(np.cos(b), np.cos([3 * math.pi, -math.pi, 7.0, -7.0]))


states = st.tuples(st.floats(-10, 10), st.floats(-10, 10), st.floats(-math.pi, math.pi), st.floats(-3, 3))
controls = st.tuples(st.floats(-1, 1), st.floats(-math.pi / 4, math.pi / 4))


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(states, st.lists(controls, min_size=1, max_size=6)), min_size=1, max_size=1))
def test_rollout_matches_scalar_oracle(case):
    (s0, us), = case
    H = len(us)
    got = rollout(np.array([s0]), np.array(us).reshape(H, 1, 2), KinematicParams())
    ref = oracles.rollout([s0], [[u] for u in us])
    assert np.allclose(got[:, 0], np.array([r[0] for r in ref]), atol=1e-12, rtol=1e-12)


@settings(max_examples=100, deadline=None)
@given(states, st.lists(st.floats(-1, 1), min_size=1, max_size=8))
def test_straight_line_property(s0, pedals):
    u = np.array([[p, 0.0] for p in pedals]).reshape(-1, 1, 2)
    s = rollout(np.array([s0]), u, KinematicParams())
    assert np.all(s[:, 0, 2] == s0[2])
    disp = s[:, 0, :2] - np.array(s0[:2])
    cross = disp[:, 0] * math.sin(s0[2]) - disp[:, 1] * math.cos(s0[2])
    assert np.max(np.abs(cross)) < 1e-9


@settings(max_examples=100, deadline=None)
@given(st.floats(-3, 3), st.integers(1, 12))
def test_speed_decay_exact(v0, H):
    prm = KinematicParams()
    s = rollout(np.array([[0, 0, 0.4, v0]]), np.zeros((H, 1, 2)), prm)
    expected = v0
    for t in range(1, H + 1):
        expected = prm.beta_decay * expected
        assert s[t, 0, 3] == expected
    assert abs(s[H, 0, 3] - prm.beta_decay ** H * v0) <= 1e-15 * max(1.0, abs(v0))


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_rollout_step_consistency_and_determinism(seed):
    rng = np.random.default_rng(seed)
    n, H = rng.integers(1, 5), rng.integers(1, 8)
    s0 = np.column_stack([rng.uniform(-10, 10, (n, 2)), rng.uniform(-3, 3, n), rng.uniform(-2, 2, n)])
    u = np.stack([rng.uniform(-1, 1, (H, n)), rng.uniform(-0.78, 0.78, (H, n))], axis=-1)
    prm = KinematicParams()
    s = rollout(s0, u, prm)
    for t in range(H):
        assert np.array_equal(s[t + 1], step(s[t], u[t], prm))
    assert np.array_equal(s, rollout(s0, u, prm))
