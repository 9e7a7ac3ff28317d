"""Closed-loop metrics, steering-noise robustness and collision-rate histograms."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .kinematics import KinematicParams
from .simulation import SimConfig, run_closed_loop


def success_to_goal_rate(logs):
    """Fraction of vehicles (pooled over logs) that reached their goal without any collision."""
    reached = sum(int(np.sum(l.reached)) for l in logs)
    total = sum(l.n_vehicles for l in logs)
    return reached / total if total else float("nan")


def collision_rate(logs):
    """Total collision events over total distance travelled (pooled, not averaged)."""
    events = sum(len(l.events) for l in logs)
    dist = sum(l.distance_traveled for l in logs)
    if events == 0:
        return 0.0
    return events / dist if dist > 0 else math.inf


def trajectory_rates(logs):
    return np.array([len(l.events) / l.distance_traveled if l.distance_traveled > 0 else math.inf
                     for l in logs if l.events], dtype=float)


@dataclass
class Histogram:
    edges: np.ndarray
    density: np.ndarray
    counts: np.ndarray

    @property
    def empty(self):
        return self.counts.sum() == 0

    @property
    def widths(self):
        return np.diff(self.edges)


def rate_histogram(logs, bins=20, range=None):
    """Normalised density of per-trajectory collision rates, collision-free trajectories excluded."""
    rates = trajectory_rates(logs)
    rates = rates[np.isfinite(rates)]
    if rates.size == 0:
        return Histogram(np.zeros(0), np.zeros(0), np.zeros(0, dtype=int))
    counts, edges = np.histogram(rates, bins=bins, range=range)
    width = np.diff(edges)
    density = counts / (counts.sum() * width)
    return Histogram(edges, density, counts)


@dataclass(frozen=True)
class NoiseConfig:
    alpha_noise: float = 0.0
    beta_noise: float = 2.0  # degrees
    seed: int = 0

    def __post_init__(self):
        if self.alpha_noise < 0 or self.beta_noise < 0:
            raise ValueError("noise parameters must be nonnegative")


def steering_noise_std(steering, alpha, beta_deg):
    """Standard deviation (radians) of the steering perturbation.

    The variance is ``alpha * |phi| + beta`` with ``phi`` and ``beta`` in
    degrees, i.e. in degrees squared.
    """
    var_deg2 = alpha * np.degrees(np.abs(steering)) + beta_deg
    return np.radians(np.sqrt(var_deg2))


class NoisyController:
    """Perturbs the inner controller's steering; pedal is untouched."""

    def __init__(self, inner, noise: NoiseConfig, params: KinematicParams = KinematicParams()):
        self.inner = inner
        self.noise = noise
        self.params = params
        self.rng = np.random.default_rng(noise.seed)

    def reset(self):
        if hasattr(self.inner, "reset"):
            self.inner.reset()

    def __call__(self, scenario, states):
        u = np.array(self.inner(scenario, states), dtype=float).reshape(-1, 2)
        xi = self.rng.standard_normal(u.shape[0])
        if self.noise.alpha_noise == 0 and self.noise.beta_noise == 0:
            return u
        u[:, 1] += steering_noise_std(u[:, 1], self.noise.alpha_noise, self.noise.beta_noise) * xi
        u[:, 1] = np.clip(u[:, 1], -self.params.phi_max, self.params.phi_max)
        return u


def noisy_controller(inner, noise: NoiseConfig, params: KinematicParams = KinematicParams()):
    return NoisyController(inner, noise, params)


@dataclass
class EvalRow:
    n_vehicles: int
    n_obstacles: int
    episodes: int
    success_to_goal: float
    collision_rate: float
    n_collisions: int
    distance: float
    histogram: Histogram = None
    logs: list = field(default_factory=list, repr=False)

    def as_dict(self):
        return dict(n_vehicles=self.n_vehicles, n_obstacles=self.n_obstacles, episodes=self.episodes,
                    success_to_goal=self.success_to_goal, collision_rate=self.collision_rate,
                    n_collisions=self.n_collisions, distance=self.distance)


def evaluate_controller(controller, scenarios, sim=SimConfig(), params=KinematicParams(), bins=20, keep_logs=False):
    logs = [run_closed_loop(controller, sc, sim, params) for sc in scenarios]
    return summarize(logs, scenarios, bins, keep_logs)


def summarize(logs, scenarios, bins=20, keep_logs=False):
    nv = scenarios[0].n_vehicles if scenarios else 0
    no = scenarios[0].n_obstacles if scenarios else 0
    return EvalRow(nv, no, len(logs), success_to_goal_rate(logs), collision_rate(logs),
                   sum(len(l.events) for l in logs), float(sum(l.distance_traveled for l in logs)),
                   rate_histogram(logs, bins), logs if keep_logs else [])


def evaluate_report(controller, scenario_batches, sim=SimConfig(), params=KinematicParams(), bins=20):
    """One :class:`EvalRow` per ``(n_vehicles, n_obstacles)`` batch."""
    return [evaluate_controller(controller, batch, sim, params, bins) for batch in scenario_batches]


def noise_sweep(controller, scenario_batches, alphas=(0.0, 0.1, 0.2, 0.3), beta_deg=2.0, seed=0,
                sim=SimConfig(), params=KinematicParams()):
    """Evaluate ``controller`` under increasing steering noise.

    Every alpha reuses the same noise seed, so the standard-normal draws are
    shared and only their scale changes.  Returns ``{alpha: [EvalRow]}`` and
    the success rate of each batch relative to the first alpha.
    """
    out = {}
    for a in alphas:
        rows = []
        for k, batch in enumerate(scenario_batches):
            noisy = NoisyController(controller, NoiseConfig(a, beta_deg, seed + k), params)
            rows.append(evaluate_controller(noisy, batch, sim, params))
        out[float(a)] = rows
    base = out[float(alphas[0])]
    relative = {a: [r.success_to_goal / b.success_to_goal if b.success_to_goal > 0 else float("nan")
                    for r, b in zip(rows, base)] for a, rows in out.items()}
    return out, relative
