"""Planning objective: target, collision and speed penalties over a horizon.

All ``*_cost`` functions take a state trajectory ``(H + 1, N, 4)`` from
:func:`mvnav.kinematics.rollout` and sum over rows ``1..H``; row 0 is the
current state and is never penalised.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels_py
from ._backend import kernels
from .errors import DimensionError, NonFiniteError
from .kinematics import KinematicParams, VehicleState, rollout, wrap_angle

EPS_CLAMP = 1e-3


@dataclass(frozen=True)
class Obstacle:
    x: float
    y: float
    r: float

    def __post_init__(self):
        if not self.r > 0:
            raise ValueError("obstacle radius must be positive")


@dataclass(frozen=True)
class VehicleTask:
    start: VehicleState
    target_x: float
    target_y: float
    target_theta: float


@dataclass
class Scenario:
    """Vehicles with start/target poses, circular obstacles and world bounds.

    Stored as arrays: ``starts`` (N, 4), ``targets`` (N, 3) as
    ``[x, y, theta]``, ``obstacles`` (M, 3) as ``[x, y, r]`` and ``bounds`` as
    ``(xmin, ymin, xmax, ymax)``.
    """

    starts: np.ndarray
    targets: np.ndarray
    obstacles: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    bounds: tuple = (-12.0, -12.0, 12.0, 12.0)
    scenario_id: int = 0

    def __post_init__(self):
        self.starts = np.asarray(self.starts, dtype=float).reshape(-1, 4)
        self.targets = np.asarray(self.targets, dtype=float).reshape(-1, 3)
        self.obstacles = np.asarray(self.obstacles, dtype=float).reshape(-1, 3)
        self.bounds = tuple(float(b) for b in self.bounds)
        if self.starts.shape[0] != self.targets.shape[0]:
            raise DimensionError("starts and targets must have one row per vehicle")

    @property
    def n_vehicles(self):
        return self.starts.shape[0]

    @property
    def n_obstacles(self):
        return self.obstacles.shape[0]

    @property
    def vehicles(self):
        return [VehicleTask(VehicleState.from_array(s), *map(float, t)) for s, t in zip(self.starts, self.targets)]

    @property
    def obstacle_list(self):
        return [Obstacle(*map(float, o)) for o in self.obstacles]

    @classmethod
    def from_tasks(cls, tasks, obstacles=(), bounds=(-12.0, -12.0, 12.0, 12.0), scenario_id=0):
        starts = [t.start.to_array() for t in tasks]
        targets = [[t.target_x, t.target_y, t.target_theta] for t in tasks]
        obs = [[o.x, o.y, o.r] for o in obstacles]
        return cls(np.array(starts).reshape(-1, 4), np.array(targets).reshape(-1, 3),
                   np.array(obs, dtype=float).reshape(-1, 3), bounds, scenario_id)

    def permuted(self, perm):
        """Same scenario with vehicles relabelled by ``perm``."""
        perm = np.asarray(perm)
        return Scenario(self.starts[perm], self.targets[perm], self.obstacles.copy(), self.bounds, self.scenario_id)

    def __eq__(self, other):
        if not isinstance(other, Scenario):
            return NotImplemented
        return (np.array_equal(self.starts, other.starts) and np.array_equal(self.targets, other.targets)
                and np.array_equal(self.obstacles, other.obstacles) and self.bounds == other.bounds
                and self.scenario_id == other.scenario_id)


@dataclass(frozen=True)
class CostWeights:
    w_pos: float = 1.0
    w_orient: float = 1.0
    w_col_veh: float = 50.0
    w_col_obs: float = 50.0
    w_vel: float = 10.0

    def __post_init__(self):
        if min(self.as_array()) < 0:
            raise ValueError("cost weights must be nonnegative")

    def as_array(self):
        return np.array([self.w_pos, self.w_orient, self.w_col_veh, self.w_col_obs, self.w_vel])


@dataclass(frozen=True)
class Margins:
    r_mar_veh: float = 3.0
    r_mar_obs: float = 2.0
    v_mar: float = 2.0

    def __post_init__(self):
        if min(self.as_array()) <= 0:
            raise ValueError("margins must be positive")

    def as_array(self):
        return np.array([self.r_mar_veh, self.r_mar_obs, self.v_mar])


@dataclass
class CostEvaluation:
    target: float
    vehicle_collision: float
    obstacle_collision: float
    velocity: float
    clamped: bool = False

    @property
    def total(self):
        return self.target + self.vehicle_collision + self.obstacle_collision + self.velocity


def _targets(scenario_or_targets):
    if isinstance(scenario_or_targets, Scenario):
        return scenario_or_targets.targets
    return np.asarray(scenario_or_targets, dtype=float).reshape(-1, 3)


def _obstacles(obstacles):
    if isinstance(obstacles, Scenario):
        return obstacles.obstacles
    if len(obstacles) and isinstance(obstacles[0], Obstacle):
        return np.array([[o.x, o.y, o.r] for o in obstacles])
    return np.asarray(obstacles, dtype=float).reshape(-1, 3)


def _fsum(values):
    # exactly rounded, hence independent of vehicle order
    return math.fsum(np.ravel(values))


def target_cost(states, scenario, weights=CostWeights()):
    s = np.asarray(states, dtype=float)
    tgt = _targets(scenario)
    dist = np.linalg.norm(s[1:, :, :2] - tgt[None, :, :2], axis=-1)
    orient = np.abs(wrap_angle(s[1:, :, 2] - tgt[None, :, 2]))
    return float(weights.w_pos * _fsum(dist) + weights.w_orient * _fsum(orient))


def vehicle_collision_cost(states, margins=Margins(), weights=CostWeights(), eps=EPS_CLAMP, diagnostics=None):
    """Inverse-distance penalty for vehicle pairs closer than ``r_mar_veh``.

    Distances below ``eps`` are clamped to ``eps``; if ``diagnostics`` is a
    dict its ``"clamped"`` key is set when that happens.
    """
    s = np.asarray(states, dtype=float)
    n = s.shape[1]
    if n < 2:
        return 0.0
    pos = s[1:, :, :2]
    i, j = np.triu_indices(n, 1)
    d = np.linalg.norm(pos[:, i] - pos[:, j], axis=-1)
    act = d < margins.r_mar_veh
    if diagnostics is not None:
        diagnostics["clamped"] = diagnostics.get("clamped", False) or bool((act & (d < eps)).any())
    vals = 1.0 / np.maximum(d[act], eps) - 1.0 / margins.r_mar_veh
    return float(weights.w_col_veh * _fsum(vals))


def obstacle_collision_cost(states, obstacles, margins=Margins(), weights=CostWeights(), eps=EPS_CLAMP,
                            diagnostics=None):
    s = np.asarray(states, dtype=float)
    obs = _obstacles(obstacles)
    if obs.shape[0] == 0:
        return 0.0
    d = np.linalg.norm(s[1:, :, None, :2] - obs[None, None, :, :2], axis=-1)
    gap = d - obs[None, None, :, 2]
    act = gap < margins.r_mar_obs
    if diagnostics is not None:
        diagnostics["clamped"] = diagnostics.get("clamped", False) or bool((act & (gap < eps)).any())
    vals = 1.0 / np.maximum(gap[act], eps) - 1.0 / margins.r_mar_obs
    return float(weights.w_col_obs * _fsum(vals))


def velocity_cost(states, margins=Margins(), weights=CostWeights()):
    s = np.asarray(states, dtype=float)
    return float(weights.w_vel * _fsum(np.maximum(np.abs(s[1:, :, 3]) - margins.v_mar, 0.0)))


def _check_controls(controls, initial):
    u = np.ascontiguousarray(controls, dtype=float)
    s0 = np.ascontiguousarray(initial, dtype=float)
    if u.ndim != 3 or u.shape[2] != 2 or s0.shape != (u.shape[1], 4):
        raise DimensionError(f"controls {u.shape} do not match states {s0.shape}")
    return u, s0


def _param_vec(params):
    return np.array([params.dt, params.beta_decay, params.gamma_steer])


def evaluate(controls, scenario, params=KinematicParams(), weights=CostWeights(), margins=Margins(),
             initial=None):
    """Roll out ``controls`` from ``initial`` (default: scenario starts) and score every term.

    Terms use exactly rounded sums, so relabelling vehicles leaves them
    bit-identical.  The optimiser calls the faster kernel directly.
    """
    initial = scenario.starts if initial is None else initial
    u, s0 = _check_controls(controls, initial)
    return evaluate_states(rollout(s0, u, params), scenario, weights, margins)


def total_cost(controls, scenario, params=KinematicParams(), weights=CostWeights(), margins=Margins(),
               initial=None):
    return evaluate(controls, scenario, params, weights, margins, initial).total


def total_cost_gradient(controls, scenario, params=KinematicParams(), weights=CostWeights(), margins=Margins(),
                        initial=None):
    """Exact gradient of :func:`total_cost` w.r.t. ``controls`` (H, N, 2).

    Indicator terms are treated as constant on their active set; clamped
    pairs contribute zero gradient.
    """
    initial = scenario.starts if initial is None else initial
    u, s0 = _check_controls(controls, initial)
    _, grad, _ = kernels.cost_grad(u, s0, scenario.targets, scenario.obstacles, _param_vec(params),
                                   weights.as_array(), margins.as_array(), EPS_CLAMP)
    bad = ~np.isfinite(grad)
    if bad.any():
        t, i, _ = np.argwhere(bad)[0]
        raise NonFiniteError(f"non-finite gradient at timestep {t}, vehicle {i}")
    return grad


def reference_gradient(controls, scenario, params=KinematicParams(), weights=CostWeights(), margins=Margins(),
                       initial=None):
    """Gradient from the numpy kernel regardless of the active backend."""
    initial = scenario.starts if initial is None else initial
    u, s0 = _check_controls(controls, initial)
    return _kernels_py.cost_grad(u, s0, scenario.targets, scenario.obstacles, _param_vec(params),
                                 weights.as_array(), margins.as_array(), EPS_CLAMP)[1]


def evaluate_states(states, scenario, weights=CostWeights(), margins=Margins()):
    """Score an already rolled-out trajectory with the per-term functions."""
    diag = {}
    return CostEvaluation(
        target_cost(states, scenario, weights),
        vehicle_collision_cost(states, margins, weights, diagnostics=diag),
        obstacle_collision_cost(states, scenario, margins, weights, diagnostics=diag),
        velocity_cost(states, margins, weights),
        clamped=diag.get("clamped", False),
    )


__all__ = [
    "Obstacle", "VehicleTask", "Scenario", "CostWeights", "Margins", "CostEvaluation", "EPS_CLAMP",
    "target_cost", "vehicle_collision_cost", "obstacle_collision_cost", "velocity_cost", "evaluate",
    "total_cost", "total_cost_gradient", "reference_gradient", "evaluate_states", "rollout",
]
