import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mvnav.costs import Scenario
from mvnav.evaluation import (NoiseConfig, NoisyController, collision_rate, evaluate_controller, noise_sweep,
                              rate_histogram, steering_noise_std, success_to_goal_rate)
from mvnav.simulation import CollisionEvent, SimConfig, TrajectoryLog


def log_of(reached, events=0, distance=10.0):
    ev = [CollisionEvent(t, "vehicle-obstacle", (0, 0)) for t in range(events)]
    n = len(reached)
    return TrajectoryLog(np.zeros((2, n, 4)), np.zeros((1, n, 2)), ev, np.array(reached, bool), distance)


class Constant:
    def __init__(self, u):
        self.u = np.asarray(u, float)

    def __call__(self, scenario, states):
        return np.tile(self.u, (scenario.n_vehicles, 1))


def test_success_examples():
    assert success_to_goal_rate([log_of([True, True])]) == 1.0
    assert success_to_goal_rate([log_of([True, True]), log_of([True, False])]) == 0.75


def test_collision_rate_examples():
    assert collision_rate([log_of([True], 0, 50.0)]) == 0
    assert abs(collision_rate([log_of([False], 4, 1000.0)]) - 4e-3) < 1e-15


def test_collision_rate_pools():
    a = [log_of([False], 1, 10.0)]
    b = [log_of([False], 1, 90.0)] * 3
    pooled = collision_rate(a + b)
    assert pooled == 4 / 280
    assert pooled != (collision_rate(a) + collision_rate(b)) / 2


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.lists(st.booleans(), min_size=1, max_size=5), st.integers(0, 4),
                          st.floats(0.5, 100)), min_size=1, max_size=12), st.randoms(use_true_random=False))
def test_metric_order_and_pooling_invariance(spec, rnd):
    logs = [log_of(r, e, d) for r, e, d in spec]
    shuffled = list(logs)
    rnd.shuffle(shuffled)
    assert success_to_goal_rate(shuffled) == success_to_goal_rate(logs)
    assert collision_rate(shuffled) == pytest.approx(collision_rate(logs), rel=1e-12)
    k = rnd.randint(0, len(logs))
    ev = sum(len(l.events) for l in logs)
    d = sum(l.distance_traveled for l in logs[:k]) + sum(l.distance_traveled for l in logs[k:])
    assert collision_rate(logs) == pytest.approx(ev / d if ev else 0.0, rel=1e-12)
    # relabeling vehicles inside a log permutes `reached` only
    relabeled = [log_of(list(reversed(r)), e, dd) for r, e, dd in spec]
    assert success_to_goal_rate(relabeled) == success_to_goal_rate(logs)


def test_histogram_empty_and_known_counts():
    assert rate_histogram([log_of([True])]).empty
    logs = [log_of([False], 1, d) for d in (10.0, 10.0, 5.0, 2.0)]  # rates .1, .1, .2, .5
    h = rate_histogram(logs + [log_of([True], 0, 3.0)], bins=4, range=(0.0, 0.8))
    assert list(h.counts) == [2, 1, 1, 0]
    assert abs(float((h.density * h.widths).sum()) - 1.0) < 1e-9


def test_noise_zero_is_identity():
    sc = Scenario([[0, 0, 0, 0]], [[1, 1, 0]])
    inner = Constant([0.3, 0.2])
    c = NoisyController(inner, NoiseConfig(0.0, 0.0, seed=1))
    assert np.array_equal(c(sc, sc.starts), inner(sc, sc.starts))


def test_noise_std_monte_carlo():
    sc = Scenario(np.zeros((1000, 4)), np.zeros((1000, 3)))
    c = NoisyController(Constant([0.0, 0.0]), NoiseConfig(0.0, 2.0, seed=7))
    draws = np.concatenate([c(sc, sc.starts)[:, 1] for _ in range(100)])
    sd = np.degrees(draws.std())
    assert abs(sd - math.sqrt(2)) / math.sqrt(2) < 0.02
    assert abs(np.degrees(draws.mean())) < 0.02


@pytest.mark.parametrize("alpha,phi_deg", [(0.1, 10.0), (0.3, 20.0), (0.2, -15.0)])
def test_noise_moments_grid(alpha, phi_deg):
    phi = math.radians(phi_deg)
    sc = Scenario(np.zeros((1000, 4)), np.zeros((1000, 3)))
    c = NoisyController(Constant([0.0, phi]), NoiseConfig(alpha, 2.0, seed=3))
    d = np.degrees(np.concatenate([c(sc, sc.starts)[:, 1] for _ in range(100)]) - phi)
    expect = math.sqrt(alpha * abs(phi_deg) + 2.0)
    assert abs(d.std() - expect) / expect < 0.02
    assert abs(math.degrees(steering_noise_std(phi, alpha, 2.0)) - expect) < 1e-12


def test_noise_clamped_to_box():
    sc = Scenario(np.zeros((500, 4)), np.zeros((500, 3)))
    c = NoisyController(Constant([0.0, math.pi / 4]), NoiseConfig(0.3, 2.0, seed=0))
    for _ in range(20):
        assert np.all(np.abs(c(sc, sc.starts)[:, 1]) <= math.pi / 4)


def test_noise_config_validation():
    with pytest.raises(ValueError):
        NoiseConfig(-0.1)


def test_noise_sweep_shapes_and_normalisation():
    sc = [Scenario([[0, 0, 0, 0]], [[2, 0, 0]], scenario_id=k) for k in range(2)]
    inner = Constant([0.5, 0.0])
    out, rel = noise_sweep(inner, [sc], alphas=[0.0], sim=SimConfig(max_steps=5))
    assert list(out) == [0.0] and len(out[0.0]) == 1
    out, rel = noise_sweep(inner, [sc], alphas=[0.0, 0.3], sim=SimConfig(max_steps=5))
    assert set(out) == {0.0, 0.3}
    assert all(math.isnan(v) or v == 1.0 for v in rel[0.0])


def test_evaluate_controller_row():
    scen = [Scenario([[0, 0, 0, 0], [6, 6, 0, 0]], [[0, 0, 0], [9, 9, 0]], scenario_id=k) for k in range(3)]
    row = evaluate_controller(Constant([0.0, 0.0]), scen, SimConfig(max_steps=5))
    assert row.episodes == 3 and row.n_vehicles == 2
    assert row.success_to_goal == 0.5 and row.collision_rate == 0.0
    assert set(row.as_dict()) >= {"success_to_goal", "collision_rate", "n_vehicles", "n_obstacles"}
