"""Ground-truth control labels from receding-horizon optimisation."""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .config import ExperimentConfig
from .gnn import GnnModel, LabeledSample, Snapshot, predict_plan
from .kinematics import clamp_controls, step
from .optimizer import WarmStart, optimize
from .simulation import TrajectoryLog, finish_log


@dataclass
class LabeledTrajectory:
    samples: list
    log: TrajectoryLog
    warm_source: str
    step_times: np.ndarray  # solver wall time per step
    step_iterations: np.ndarray
    warm_times: np.ndarray  # time spent building the warm start
    init_costs: np.ndarray
    final_costs: np.ndarray
    clamp_steps: int = 0
    tainted: bool = False
    scenario_id: int = 0


def label_trajectory(scenario, warm_source="shifted", config: ExperimentConfig = ExperimentConfig(),
                     model: GnnModel = None) -> LabeledTrajectory:
    """Run MPC for ``config.sim.max_steps`` steps, recording each first control as a label.

    ``warm_source`` is ``"shifted"`` (previous plan advanced one step, zeros at
    the first step) or ``"policy"`` (plan rolled out by ``model``).
    """
    if warm_source not in ("shifted", "policy"):
        raise ValueError(f"unknown warm source {warm_source!r}")
    if warm_source == "policy" and model is None:
        raise ValueError("policy warm source needs a model")
    T, H, n = config.sim.max_steps, config.solver.horizon, scenario.n_vehicles
    states = np.empty((T + 1, n, 4))
    controls = np.empty((T, n, 2))
    states[0] = scenario.starts
    samples = []
    times, iters, wtimes, c0, c1 = (np.zeros(T) for _ in range(5))
    clamp_steps = 0
    previous = None
    for t in range(T):
        w0 = time.perf_counter()
        if warm_source == "policy":
            init = WarmStart.policy(predict_plan(model, scenario, states[t], H, config.kinematics))
        elif previous is None:
            init = WarmStart.zeros()
        else:
            init = WarmStart.shifted(previous)
        wtimes[t] = time.perf_counter() - w0
        try:
            res = optimize(scenario, states[t], init, config.solver, config.kinematics, config.weights,
                           config.margins)
        except Exception as exc:
            raise type(exc)(f"labeling step {t}: {exc}") from exc
        previous = res.controls
        times[t], iters[t], c0[t], c1[t] = res.wall_time, res.iterations, res.initial_cost, res.final_cost
        clamp_steps += int(res.clamp_flag)
        u = clamp_controls(res.controls[0], config.kinematics)
        samples.append(LabeledSample(Snapshot(states[t].copy(), scenario.targets, scenario.obstacles), u.copy(),
                                     scenario.scenario_id, t))
        controls[t] = u
        states[t + 1] = step(states[t], u, config.kinematics)
    log = finish_log(states, controls, scenario, config.sim)
    tainted = clamp_steps > config.label.taint_fraction * T
    return LabeledTrajectory(samples, log, warm_source, times, iters, wtimes, c0, c1, clamp_steps, tainted,
                             scenario.scenario_id)


@dataclass
class Dataset:
    samples: list = field(default_factory=list)
    manifest: dict = field(default_factory=dict)
    trajectories: list = field(default_factory=list)


def _label_one(args):
    scenario, warm_source, config, model = args
    return label_trajectory(scenario, warm_source, config, model)


def build_dataset(scenarios, warm_source="shifted", config: ExperimentConfig = ExperimentConfig(), model=None,
                  seed=None, include_tainted=False, jobs=1, keep_trajectories=False) -> Dataset:
    """Label every scenario and concatenate the untainted trajectories."""
    args = [(sc, warm_source, config, model) for sc in scenarios]
    if jobs > 1 and len(args) > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(jobs) as pool:
            results = list(pool.map(_label_one, args))
    else:
        results = [_label_one(a) for a in args]
    samples, entries = [], []
    for res in results:
        keep = include_tainted or not res.tainted
        if keep:
            samples.extend(res.samples)
        entries.append(dict(scenario_id=int(res.scenario_id), warm_source=warm_source, n_samples=len(res.samples),
                            tainted=bool(res.tainted), included=bool(keep), clamp_steps=int(res.clamp_steps),
                            events=len(res.log.events), reached=int(res.log.reached.sum())))
    manifest = dict(config_hash=config.hash(), seed=seed, warm_source=warm_source,
                    n_samples=len(samples), n_trajectories=len(results), scenarios=entries)
    return Dataset(samples, manifest, results if keep_trajectories else [])


def telemetry_rows(trajectories):
    """Per-step timing rows for a telemetry CSV."""
    rows = []
    for tr in trajectories:
        for t in range(len(tr.step_times)):
            rows.append(dict(scenario_id=tr.scenario_id, step=t, warm_source=tr.warm_source,
                             solve_time=float(tr.step_times[t]), iterations=int(tr.step_iterations[t]),
                             warm_time=float(tr.warm_times[t]), init_cost=float(tr.init_costs[t]),
                             final_cost=float(tr.final_costs[t])))
    return rows
