"""Multi-step workflows shared by the CLI and the acceptance suite."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .config import ExperimentConfig
from .evaluation import collision_rate, evaluate_controller, success_to_goal_rate
from .gnn import GnnModel, TrainConfig, predict_plan, train
from .kinematics import clamp_controls, step
from .labeling import build_dataset
from .mining import mine, select_fraction
from .optimizer import WarmStart, benchmark_step, optimize
from .simulation import generate_scenario

log = logging.getLogger(__name__)


def scenario_pool(counts, seed, config: ExperimentConfig = ExperimentConfig(), id_offset=0):
    """Scenarios for a list of ``(n_vehicles, n_obstacles, how_many)`` triples.

    Every scenario gets its own child seed, so pools are reproducible and
    independent of ordering elsewhere.
    """
    ss = np.random.SeedSequence(seed)
    total = sum(c[2] for c in counts)
    children = ss.spawn(total)
    out, k = [], 0
    for nv, no, how_many in counts:
        for _ in range(how_many):
            out.append(generate_scenario(nv, no, config.sim.bounds, np.random.default_rng(children[k]),
                                         config.margins, config.sim, scenario_id=id_offset + k))
            k += 1
    return out


def new_model(config: ExperimentConfig, seed=0):
    m = config.model
    return GnnModel(m.n_layers, m.hidden, m.msg_hidden, seed=seed, recenter=m.recenter,
                    pedal_max=config.kinematics.pedal_max, phi_max=config.kinematics.phi_max)


# -- warm-start benchmark ---------------------------------------------------------

@dataclass
class WarmStartBenchmark:
    rows: list = field(default_factory=list)

    def column(self, key):
        return np.array([r[key] for r in self.rows], dtype=float)

    @property
    def time_ratio(self):
        """Mean shifted-init solve time over mean policy-init solve time."""
        return float(self.column("time_shifted").mean() / self.column("time_policy").mean())

    def summary(self):
        return dict(steps=len(self.rows),
                    mean_time_shifted=float(self.column("time_shifted").mean()),
                    mean_time_policy=float(self.column("time_policy").mean()),
                    median_iter_shifted=float(np.median(self.column("iter_shifted"))),
                    median_iter_policy=float(np.median(self.column("iter_policy"))),
                    mean_iter_shifted=float(self.column("iter_shifted").mean()),
                    mean_iter_policy=float(self.column("iter_policy").mean()),
                    time_ratio=self.time_ratio)


def warm_start_benchmark(model, scenarios, config: ExperimentConfig = ExperimentConfig(), steps=None, stride=1,
                         repeats=1):
    """Compare shifted-previous and policy warm starts on matched MPC steps.

    Each scenario is driven by the shifted-start MPC (the baseline labelling
    loop).  At every ``stride``-th step after the first, the identical
    instance is solved from both warm starts.
    """
    bench = WarmStartBenchmark()
    T = steps or config.sim.max_steps
    H = config.solver.horizon
    for sc in scenarios:
        s = sc.starts.copy()
        previous = None
        for t in range(T):
            if previous is not None and t % stride == 0:
                plan = predict_plan(model, sc, s, H, config.kinematics)
                r = benchmark_step(sc, s, WarmStart.policy(plan), WarmStart.shifted(previous), repeats,
                                   config.solver, config.kinematics, config.weights, config.margins)
                bench.rows.append(dict(scenario_id=sc.scenario_id, step=t, n_vehicles=sc.n_vehicles,
                                       n_obstacles=sc.n_obstacles,
                                       time_policy=r["time_a"], time_shifted=r["time_b"],
                                       iter_policy=r["iterations_a"], iter_shifted=r["iterations_b"],
                                       init_cost_policy=r["init_cost_a"], init_cost_shifted=r["init_cost_b"],
                                       cost_policy=r["cost_a"], cost_shifted=r["cost_b"]))
            init = WarmStart.zeros() if previous is None else WarmStart.shifted(previous)
            res = optimize(sc, s, init, config.solver, config.kinematics, config.weights, config.margins)
            previous = res.controls
            s = step(s, clamp_controls(res.controls[0], config.kinematics), config.kinematics)
    return bench


# -- pretraining and mining ---------------------------------------------------------

def train_on(samples, config: ExperimentConfig, seed=0, init_model=None, epochs=None, log_fn=None):
    tc = config.train
    tc = TrainConfig(tc.lr, epochs or tc.epochs, tc.batch_size, seed, tc.val_split, tc.patience,
                     tc.beta1, tc.beta2, tc.adam_eps)
    model = init_model if init_model is not None else new_model(config, seed)
    return train(model, samples, tc, log=log_fn)


@dataclass
class MiningComparison:
    hard: object
    random: object
    pretrained: object = None
    selected_hard: list = field(default_factory=list)
    selected_random: list = field(default_factory=list)
    pretrained_model: object = None
    hard_model: object = None
    random_model: object = None


def mining_comparison(seed, config: ExperimentConfig = ExperimentConfig(), pretrain_counts=((1, 0, 20), (2, 0, 40)),
                      pool_counts=((3, 0, 150), (4, 0, 150)), test_counts=((5, 0, 100), (6, 0, 100)),
                      fraction=0.1, pretrain_epochs=None, finetune_epochs=None, evaluate_pretrained=False,
                      pretrained=None):
    """Hard-mined versus random extra data, everything else matched.

    Pretrain on easy scenarios, mine the pool with the pretrained policy,
    label the top ``fraction`` and an equal-size random subset, fine-tune a
    copy of the pretrained model on (pretraining data + subset) for each, and
    evaluate both on unseen larger scenarios.
    """
    rng = np.random.default_rng([seed, 1])
    if pretrained is None:
        pre_scen = scenario_pool(pretrain_counts, [seed, 10], config, id_offset=0)
        pre_data = build_dataset(pre_scen, "shifted", config, seed=seed).samples
        pre_model = train_on(pre_data, config, seed=seed, epochs=pretrain_epochs).model
    else:
        pre_model, pre_data = pretrained
    pool = scenario_pool(pool_counts, [seed, 20], config, id_offset=100000)
    ranked = mine(pre_model, pool, config.sim, config.kinematics)
    hard = [s.scenario for s in select_fraction(ranked, fraction)]
    k = len(hard)
    rand = [pool[i] for i in sorted(rng.choice(len(pool), size=k, replace=False))]
    hard_data = build_dataset(hard, "policy", config, model=pre_model, seed=seed).samples
    rand_data = build_dataset(rand, "policy", config, model=pre_model, seed=seed).samples
    hard_model = train_on(pre_data + hard_data, config, seed=seed, init_model=pre_model.copy(),
                          epochs=finetune_epochs).model
    rand_model = train_on(pre_data + rand_data, config, seed=seed, init_model=pre_model.copy(),
                          epochs=finetune_epochs).model
    test = scenario_pool(test_counts, [seed, 30], config, id_offset=200000)
    batches = _batches(test)
    res_h = [evaluate_controller(hard_model, b, config.sim, config.kinematics, keep_logs=True) for b in batches]
    res_r = [evaluate_controller(rand_model, b, config.sim, config.kinematics, keep_logs=True) for b in batches]
    res_p = None
    if evaluate_pretrained:
        res_p = [evaluate_controller(pre_model, b, config.sim, config.kinematics, keep_logs=True) for b in batches]
    return MiningComparison(res_h, res_r, res_p, hard, rand, pre_model, hard_model, rand_model)


def _batches(scenarios):
    groups = {}
    for sc in scenarios:
        groups.setdefault((sc.n_vehicles, sc.n_obstacles), []).append(sc)
    return [groups[k] for k in sorted(groups)]


def pooled(rows):
    """Pool success and collision metrics across several :class:`EvalRow` batches."""
    logs = [l for r in rows for l in r.logs]
    return success_to_goal_rate(logs), collision_rate(logs)
