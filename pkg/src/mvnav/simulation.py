"""Closed-loop multi-vehicle environment."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .costs import Margins, Scenario
from .errors import NonFiniteError, ScenarioGenerationError
from .kinematics import KinematicParams, clamp_controls, step, wrap_angle

DEFAULT_BOUNDS = (-12.0, -12.0, 12.0, 12.0)


@dataclass(frozen=True)
class SimConfig:
    max_steps: int = 120
    pos_threshold: float = 1.25
    orient_threshold: float = 0.2
    vehicle_radius: float = 1.0
    seed: int = 0
    bounds: tuple = DEFAULT_BOUNDS
    obstacle_radius: tuple = (0.5, 1.5)

    def __post_init__(self):
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        if self.pos_threshold <= 0 or self.orient_threshold <= 0:
            raise ValueError("thresholds must be positive")


@dataclass(frozen=True)
class CollisionEvent:
    timestep: int
    kind: str  # "vehicle-vehicle" | "vehicle-obstacle"
    participants: tuple


@dataclass
class TrajectoryLog:
    states: np.ndarray  # (T + 1, N, 4)
    controls: np.ndarray  # (T, N, 2)
    events: list = field(default_factory=list)
    reached: np.ndarray = None
    distance_traveled: float = 0.0
    scenario_id: int = 0

    @property
    def n_vehicles(self):
        return self.states.shape[1]

    @property
    def n_collisions(self):
        return len(self.events)


def travelled_distance(states):
    steps = np.diff(np.asarray(states)[:, :, :2], axis=0)
    return float(np.sqrt((steps ** 2).sum(-1)).sum())


def generate_scenario(n_vehicles, n_obstacles, bounds=DEFAULT_BOUNDS, rng=None, margins=Margins(),
                      config=SimConfig(), scenario_id=0, max_tries=2000):
    """Uniform random placement with rejection.

    Starts are pairwise more than ``r_mar_veh`` apart, targets at least two
    position thresholds apart, and every start/target keeps ``r_mar_obs`` of
    clearance from each obstacle circle.  Start speeds are zero.
    """
    rng = np.random.default_rng(rng)
    xmin, ymin, xmax, ymax = bounds
    rlo, rhi = config.obstacle_radius

    def point():
        return rng.uniform(xmin, xmax), rng.uniform(ymin, ymax)

    obstacles = []
    for _ in range(n_obstacles):
        for _ in range(max_tries):
            x, y = point()
            r = rng.uniform(rlo, rhi)
            if all(math.hypot(x - ox, y - oy) > r + orr for ox, oy, orr in obstacles):
                obstacles.append((x, y, r))
                break
        else:
            raise ScenarioGenerationError(
                f"could not place {n_obstacles} obstacles in {bounds}; use larger bounds")

    def clear(x, y, placed, sep):
        if any(math.hypot(x - ox, y - oy) - orr < margins.r_mar_obs for ox, oy, orr in obstacles):
            return False
        return all(math.hypot(x - px, y - py) > sep for px, py in placed)

    starts, targets = [], []
    for _ in range(n_vehicles):
        for _ in range(max_tries):
            x, y = point()
            if clear(x, y, starts, margins.r_mar_veh):
                starts.append((x, y))
                break
        else:
            raise ScenarioGenerationError(
                f"could not place {n_vehicles} vehicle starts in {bounds}; use larger bounds")
        for _ in range(max_tries):
            x, y = point()
            if clear(x, y, targets, 2 * config.pos_threshold):
                targets.append((x, y))
                break
        else:
            raise ScenarioGenerationError(
                f"could not place {n_vehicles} vehicle targets in {bounds}; use larger bounds")
    headings = wrap_angle(rng.uniform(-math.pi, math.pi, size=(n_vehicles, 2)))
    st = np.zeros((n_vehicles, 4))
    st[:, :2] = np.array(starts).reshape(-1, 2)
    st[:, 2] = headings[:, 0]
    tg = np.zeros((n_vehicles, 3))
    tg[:, :2] = np.array(targets).reshape(-1, 2)
    tg[:, 2] = headings[:, 1]
    return Scenario(st, tg, np.array(obstacles, dtype=float).reshape(-1, 3), tuple(bounds), scenario_id)


def scenario_violations(scenario, margins=Margins(), config=SimConfig()):
    """List human-readable invariant violations (empty when valid)."""
    out = []
    st, tg, obs = scenario.starts, scenario.targets, scenario.obstacles
    xmin, ymin, xmax, ymax = scenario.bounds
    for name, pts in (("start", st[:, :2]), ("target", tg[:, :2])):
        if ((pts[:, 0] < xmin) | (pts[:, 0] > xmax) | (pts[:, 1] < ymin) | (pts[:, 1] > ymax)).any():
            out.append(f"{name} outside bounds")
        if obs.shape[0]:
            gap = np.linalg.norm(pts[:, None] - obs[None, :, :2], axis=-1) - obs[None, :, 2]
            if (gap < margins.r_mar_obs).any():
                out.append(f"{name} too close to an obstacle")
    n = st.shape[0]
    if n > 1:
        i, j = np.triu_indices(n, 1)
        if (np.linalg.norm(st[i, :2] - st[j, :2], axis=-1) <= margins.r_mar_veh).any():
            out.append("starts closer than r_mar_veh")
        if (np.linalg.norm(tg[i, :2] - tg[j, :2], axis=-1) < 2 * config.pos_threshold).any():
            out.append("targets closer than two position thresholds")
    return out


def contact_matrices(states, scenario, vehicle_radius):
    """Boolean contact flags per timestep: ``(T+1, N, N)`` and ``(T+1, N, M)``."""
    pos = np.asarray(states)[:, :, :2]
    dvv = np.linalg.norm(pos[:, :, None] - pos[:, None, :], axis=-1)
    n = pos.shape[1]
    vv = (dvv < 2 * vehicle_radius) & np.triu(np.ones((n, n), dtype=bool), 1)[None]
    obs = scenario.obstacles
    if obs.shape[0]:
        dvo = np.linalg.norm(pos[:, :, None] - obs[None, None, :, :2], axis=-1)
        vo = dvo < vehicle_radius + obs[None, None, :, 2]
    else:
        vo = np.zeros(pos.shape[:2] + (0,), dtype=bool)
    return vv, vo


def detect_collisions(states, scenario, config=SimConfig()):
    """One event per pair per contact onset (non-contact -> contact)."""
    vv, vo = contact_matrices(states, scenario, config.vehicle_radius)
    events = []
    for kind, c in (("vehicle-vehicle", vv), ("vehicle-obstacle", vo)):
        prev = np.zeros_like(c[:1])
        onset = c & ~np.concatenate([prev, c[:-1]], axis=0)
        for t, i, j in np.argwhere(onset):
            events.append(CollisionEvent(int(t), kind, (int(i), int(j))))
    events.sort(key=lambda e: (e.timestep, e.kind != "vehicle-vehicle", e.participants))
    return events


def vehicle_success(final_states, scenario, events, config=SimConfig()):
    """Per-vehicle success: inside both thresholds at the end and never in an event."""
    fs = np.asarray(final_states)
    pos_err = np.linalg.norm(fs[:, :2] - scenario.targets[:, :2], axis=-1)
    ang_err = np.abs(wrap_angle(fs[:, 2] - scenario.targets[:, 2]))
    ok = (pos_err <= config.pos_threshold) & (ang_err <= config.orient_threshold)
    for e in events:
        ok[e.participants[0]] = False
        if e.kind == "vehicle-vehicle":
            ok[e.participants[1]] = False
    return ok


def run_closed_loop(controller, scenario, config=SimConfig(), params=KinematicParams(), initial=None):
    """Drive every vehicle for ``config.max_steps`` steps under ``controller``.

    ``controller(scenario, states) -> (N, 2)``; outputs are clamped to the
    actuator box before stepping.  Controllers exposing ``reset()`` are reset
    first.
    """
    if hasattr(controller, "reset"):
        controller.reset()
    T, n = config.max_steps, scenario.n_vehicles
    states = np.empty((T + 1, n, 4))
    controls = np.empty((T, n, 2))
    states[0] = scenario.starts if initial is None else initial
    for t in range(T):
        u = np.asarray(controller(scenario, states[t]), dtype=float).reshape(n, 2)
        if not np.all(np.isfinite(u)):
            raise NonFiniteError(f"controller returned non-finite controls at timestep {t}")
        controls[t] = clamp_controls(u, params)
        states[t + 1] = step(states[t], controls[t], params)
    return finish_log(states, controls, scenario, config)


def finish_log(states, controls, scenario, config=SimConfig()):
    events = detect_collisions(states, scenario, config)
    reached = vehicle_success(states[-1], scenario, events, config)
    return TrajectoryLog(states, controls, events, reached, travelled_distance(states), scenario.scenario_id)


class ZeroController:
    def __call__(self, scenario, states):
        return np.zeros((scenario.n_vehicles, 2))


class ScriptedController:
    """Replays a fixed ``(T, N, 2)`` control sequence."""

    def __init__(self, controls):
        self.controls = np.asarray(controls, dtype=float)
        self.t = 0

    def reset(self):
        self.t = 0

    def __call__(self, scenario, states):
        u = self.controls[min(self.t, len(self.controls) - 1)]
        self.t += 1
        return u
