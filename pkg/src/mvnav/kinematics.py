"""Kinematic bicycle model.

States are ``(..., 4)`` arrays laid out as ``[x, y, theta, v]`` and controls
are ``(..., 2)`` arrays laid out as ``[pedal, steering]``.  The dataclasses
below are thin conveniences for single vehicles; all hot paths work on arrays.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError

PHI_MAX = math.pi / 4

X, Y, THETA, V = range(4)
PEDAL, STEER = range(2)


@dataclass(frozen=True)
class VehicleState:
    x: float
    y: float
    theta: float
    v: float

    def to_array(self):
        return np.array([self.x, self.y, self.theta, self.v], dtype=float)

    @classmethod
    def from_array(cls, a):
        return cls(float(a[0]), float(a[1]), float(a[2]), float(a[3]))


@dataclass(frozen=True)
class Control:
    pedal: float
    steering: float

    def to_array(self):
        return np.array([self.pedal, self.steering], dtype=float)

    @classmethod
    def from_array(cls, a):
        return cls(float(a[0]), float(a[1]))


@dataclass(frozen=True)
class KinematicParams:
    dt: float = 0.2
    beta_decay: float = 0.95
    gamma_steer: float = 0.5
    phi_max: float = PHI_MAX
    pedal_max: float = 1.0

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not 0 < self.beta_decay <= 1:
            raise ValueError("beta_decay must lie in (0, 1]")
        if not self.gamma_steer > 0:
            raise ValueError("gamma_steer must be positive")
        if not self.pedal_max > 0:
            raise ValueError("pedal_max must be positive")
        if not 0 < self.phi_max < math.pi / 2:
            raise ValueError("phi_max must lie in (0, pi/2)")

    @property
    def lower(self):
        return np.array([-self.pedal_max, -self.phi_max])

    @property
    def upper(self):
        return np.array([self.pedal_max, self.phi_max])


def wrap_angle(a):
    """Map angles onto (-pi, pi].  Values already in range are returned untouched."""
    a = np.asarray(a, dtype=float)
    out_of_range = (a > math.pi) | (a <= -math.pi)
    if not np.any(out_of_range):
        return a
    wrapped = math.pi - np.mod(math.pi - a, 2 * math.pi)
    return np.where(out_of_range, wrapped, a)


def clamp_controls(controls, params):
    """Project controls onto the actuator box."""
    return np.clip(controls, params.lower, params.upper)


def step(state, control, params):
    """Advance one or many vehicles by one timestep.

    ``state`` is ``(..., 4)`` and ``control`` is ``(..., 2)`` with matching
    leading shape.  Controls are used as given; clamp them beforehand.
    """
    if isinstance(state, VehicleState):
        nxt = step(state.to_array(), control.to_array() if isinstance(control, Control) else control, params)
        return VehicleState.from_array(nxt)
    s = np.asarray(state, dtype=float)
    u = np.asarray(control, dtype=float)
    if s.shape[-1] != 4 or u.shape[-1] != 2 or s.shape[:-1] != u.shape[:-1]:
        raise DimensionError(f"state {s.shape} and control {u.shape} do not match")
    x, y, th, v = s[..., X], s[..., Y], s[..., THETA], s[..., V]
    p, phi = u[..., PEDAL], u[..., STEER]
    dt = params.dt
    out = np.empty_like(s)
    out[..., X] = x + v * np.cos(th) * dt
    out[..., Y] = y + v * np.sin(th) * dt
    out[..., THETA] = wrap_angle(th + v * np.tan(phi) * params.gamma_steer * dt)
    out[..., V] = params.beta_decay * v + p * dt
    return out


def rollout(initial, controls, params):
    """Roll ``initial`` ``(N, 4)`` forward under ``controls`` ``(H, N, 2)``.

    Returns ``(H + 1, N, 4)``; row 0 is the initial state.
    """
    s0 = np.asarray(initial, dtype=float)
    u = np.asarray(controls, dtype=float)
    if u.ndim != 3 or s0.ndim != 2 or u.shape[1] != s0.shape[0] or u.shape[2] != 2 or s0.shape[1] != 4:
        raise DimensionError(
            f"controls must be (H, N, 2) and initial (N, 4); got {u.shape} and {s0.shape}"
        )
    if u.shape[0] < 1:
        raise DimensionError("horizon must be at least 1")
    states = np.empty((u.shape[0] + 1,) + s0.shape)
    states[0] = s0
    for t in range(u.shape[0]):
        states[t + 1] = step(states[t], u[t], params)
    return states
