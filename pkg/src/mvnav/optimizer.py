"""Box-constrained control optimisation for the multi-vehicle planning cost.

The solver is a projected limited-memory BFGS: quasi-Newton directions on the
free variables, projection onto the actuator box after every trial step, and
Armijo backtracking so accepted iterates never increase the cost.
"""
from __future__ import annotations

import time
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from ._backend import kernels
from .costs import EPS_CLAMP, CostWeights, Margins, Scenario
from .errors import DimensionError, NonFiniteError
from .kinematics import KinematicParams


@dataclass(frozen=True)
class SolverConfig:
    horizon: int = 10
    g_tol: float = 1e-4
    f_tol: float = 1e-8
    max_iter: int = 200
    memory: int = 10
    armijo_c1: float = 1e-4
    max_backtracks: int = 40


@dataclass
class WarmStart:
    """Initial control plan.

    ``variant`` is ``"zeros"``, ``"shifted_previous"`` or
    ``"policy_prediction"``; the latter two carry an ``(H, N, 2)`` plan.
    """

    variant: str = "zeros"
    controls: np.ndarray | None = None

    VARIANTS = ("zeros", "shifted_previous", "policy_prediction")

    def __post_init__(self):
        if self.variant not in self.VARIANTS:
            raise ValueError(f"unknown warm start {self.variant!r}")
        if self.variant != "zeros" and self.controls is None:
            raise ValueError(f"{self.variant} warm start needs a control plan")

    @classmethod
    def zeros(cls):
        return cls("zeros")

    @classmethod
    def shifted(cls, previous):
        return cls("shifted_previous", shift_warm_start(previous))

    @classmethod
    def policy(cls, plan):
        return cls("policy_prediction", np.asarray(plan, dtype=float))

    def initial_controls(self, horizon, n_vehicles):
        if self.variant == "zeros":
            return np.zeros((horizon, n_vehicles, 2))
        u = np.array(self.controls, dtype=float)
        if u.shape != (horizon, n_vehicles, 2):
            raise DimensionError(f"warm start plan {u.shape} != {(horizon, n_vehicles, 2)}")
        return u


@dataclass
class OptResult:
    controls: np.ndarray
    final_cost: float
    initial_cost: float
    iterations: int
    n_evals: int
    wall_time: float
    converged: bool
    clamp_flag: bool
    reason: str = ""
    terms: np.ndarray = field(default_factory=lambda: np.zeros(4))


def shift_warm_start(previous):
    """Advance a plan by one step, repeating the final row."""
    prev = np.asarray(previous, dtype=float)
    if prev.shape[0] <= 1:
        return prev.copy()
    return np.concatenate([prev[1:], prev[-1:]], axis=0)


def _two_loop(g, S, Y):
    q = g.copy()
    alphas = []
    for s, y, rho in reversed(list(zip(S, Y, (1.0 / np.dot(y, s) for s, y in zip(S, Y))))):
        a = rho * np.dot(s, q)
        q -= a * y
        alphas.append((a, rho, s, y))
    s, y = S[-1], Y[-1]
    q *= np.dot(s, y) / np.dot(y, y)
    for a, rho, s, y in reversed(alphas):
        b = rho * np.dot(y, q)
        q += (a - b) * s
    return q


def minimize_box(fun_grad, x0, lower, upper, config=SolverConfig(), callback=None):
    """Minimise ``fun_grad(x) -> (f, g, info)`` over the box ``[lower, upper]``.

    Returns ``(x, f, info, iterations, n_evals, reason)`` where ``reason`` is
    one of ``"gtol"``, ``"ftol"``, ``"max_iter"`` or ``"linesearch"``.
    ``callback(x, f)`` sees every accepted iterate.
    """
    x = np.clip(x0, lower, upper)
    f, g, info = fun_grad(x)
    n_evals = 1
    if not np.isfinite(f):
        raise NonFiniteError("cost is not finite at the initial point")
    S, Y = deque(maxlen=config.memory), deque(maxlen=config.memory)
    reason = "max_iter"
    it = 0
    while True:
        pg = x - np.clip(x - g, lower, upper)
        if np.max(np.abs(pg), initial=0.0) < config.g_tol:
            reason = "gtol"
            break
        if it >= config.max_iter:
            break
        pinned = ((x <= lower) & (g > 0)) | ((x >= upper) & (g < 0))
        gf = np.where(pinned, 0.0, g)
        if S:
            d = -_two_loop(gf, S, Y)
            d[pinned] = 0.0
            if np.dot(d, gf) >= 0:
                S.clear()
                Y.clear()
        if not S:
            d = -gf * min(1.0, 0.5 / max(np.max(np.abs(gf)), 1e-300))

        accepted = None
        for attempt in range(2):
            alpha = 1.0
            for _ in range(config.max_backtracks):
                xn = np.clip(x + alpha * d, lower, upper)
                dec = np.dot(g, xn - x)
                if dec < 0:
                    fn, gn, infon = fun_grad(xn)
                    n_evals += 1
                    if fn <= f + config.armijo_c1 * dec:
                        accepted = (xn, fn, gn, infon)
                        break
                alpha *= 0.5
            if accepted is not None or not S:
                break
            # quasi-Newton direction failed; retry along the projected gradient
            S.clear()
            Y.clear()
            d = -gf * min(1.0, 0.5 / max(np.max(np.abs(gf)), 1e-300))
        if accepted is None:
            reason = "linesearch"
            break
        xn, fn, gn, infon = accepted
        it += 1
        s, y = xn - x, gn - g
        if np.dot(s, y) > 1e-12 * np.dot(y, y):
            S.append(s)
            Y.append(y)
        drop = f - fn
        x, f, g, info = xn, fn, gn, infon
        if callback is not None:
            callback(x, f)
        if drop <= config.f_tol * max(abs(f), abs(f + drop), 1.0):
            reason = "ftol"
            break
    return x, f, info, it, n_evals, reason


def optimize(scenario: Scenario, current_states, init: WarmStart = None, config: SolverConfig = SolverConfig(),
             params: KinematicParams = KinematicParams(), weights: CostWeights = CostWeights(),
             margins: Margins = Margins()) -> OptResult:
    """Optimise an ``H``-step plan for every vehicle from ``current_states``."""
    init = init or WarmStart.zeros()
    s0 = np.ascontiguousarray(current_states, dtype=float)
    n = scenario.n_vehicles
    if s0.shape != (n, 4):
        raise DimensionError(f"expected current states of shape {(n, 4)}, got {s0.shape}")
    if not np.all(np.isfinite(s0)):
        raise NonFiniteError("current states contain non-finite values")
    H = config.horizon
    shape = (H, n, 2)
    lower = np.broadcast_to(params.lower, shape).ravel()
    upper = np.broadcast_to(params.upper, shape).ravel()
    prm = np.array([params.dt, params.beta_decay, params.gamma_steer])
    w, mar = weights.as_array(), margins.as_array()
    tgt, obs = scenario.targets, scenario.obstacles

    def fun_grad(x):
        terms, grad, clamped = kernels.cost_grad(x.reshape(shape), s0, tgt, obs, prm, w, mar, EPS_CLAMP)
        return terms.sum(), grad.ravel(), (terms, clamped)

    u0 = np.clip(init.initial_controls(H, n), params.lower, params.upper).ravel()
    t0 = time.perf_counter()
    x, f, (terms, clamped), iters, n_evals, reason = minimize_box(fun_grad, u0, lower, upper, config)
    wall = time.perf_counter() - t0
    f0 = float(kernels.cost_terms(u0.reshape(shape), s0, tgt, obs, prm, w, mar, EPS_CLAMP)[0].sum())
    converged = reason in ("gtol", "ftol") and not clamped
    return OptResult(x.reshape(shape), float(f), f0, iters, n_evals, wall, converged, bool(clamped), reason,
                     np.asarray(terms, dtype=float))


def benchmark_step(scenario, states, init_a: WarmStart, init_b: WarmStart, repeats=3, config=SolverConfig(),
                   params=KinematicParams(), weights=CostWeights(), margins=Margins()):
    """Solve one instance from two warm starts and compare.

    Timing covers the solve only; building the warm start is excluded.
    ``ratio`` is ``time_b / time_a``.
    """
    out = {}
    for key, init in (("a", init_a), ("b", init_b)):
        times, iters = [], []
        for _ in range(max(1, repeats)):
            r = optimize(scenario, states, init, config, params, weights, margins)
            times.append(r.wall_time)
            iters.append(r.iterations)
        out[f"time_{key}"] = float(np.mean(times))
        out[f"iterations_{key}"] = float(np.mean(iters))
        out[f"cost_{key}"] = r.final_cost
        out[f"init_cost_{key}"] = r.initial_cost
    out["ratio"] = out["time_b"] / out["time_a"] if out["time_a"] > 0 else float("nan")
    return out


class MPCController:
    """Receding-horizon controller: optimise, apply the first row, shift."""

    def __init__(self, config=SolverConfig(), params=KinematicParams(), weights=CostWeights(), margins=Margins()):
        self.config = config
        self.params = params
        self.weights = weights
        self.margins = margins
        self.previous = None
        self.last_result = None

    def reset(self):
        self.previous = None
        self.last_result = None

    def __call__(self, scenario, states):
        if self.previous is None or self.previous.shape[1] != scenario.n_vehicles:
            init = WarmStart.zeros()
        else:
            init = WarmStart.shifted(self.previous)
        res = optimize(scenario, states, init, self.config, self.params, self.weights, self.margins)
        self.previous = res.controls
        self.last_result = res
        return res.controls[0].copy()
