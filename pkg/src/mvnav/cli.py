"""Command-line entry point: ``mvnav <subcommand> ...``.

Exit codes: 0 success, 2 usage error, 3 missing input file, 4 corrupt or
unsupported file, 1 anything else.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys

import numpy as np

from . import storage
from .config import ExperimentConfig
from .errors import MvnavError, StorageError
from .evaluation import evaluate_controller, noise_sweep, rate_histogram
from .experiments import new_model, scenario_pool, train_on, warm_start_benchmark
from .labeling import build_dataset, telemetry_rows
from .mining import mine, ranking_manifest, select_fraction

log = logging.getLogger("mvnav")

EXIT_OK, EXIT_ERROR, EXIT_USAGE, EXIT_MISSING, EXIT_FORMAT = 0, 1, 2, 3, 4


def _int_list(text):
    try:
        return [int(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _float_list(text):
    try:
        return [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def write_csv(path, rows, columns):
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: _fmt(r.get(k)) for k in columns})
    storage.atomic_write(path, buf.getvalue().encode())


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def _sidecar(path, suffix):
    root, _ = os.path.splitext(path)
    return root + suffix


def _require(*paths):
    for p in paths:
        if p is not None and not os.path.exists(p):
            raise FileNotFoundError(p)


def _config(args):
    return ExperimentConfig.load(args.config)


def _counts(vehicles, obstacles, n):
    return [(v, o, n) for v in vehicles for o in obstacles]


# -- subcommands ---------------------------------------------------------------------

def cmd_gen(args):
    cfg = _config(args)
    rng = np.random.default_rng(args.seed)
    counts = []
    for _ in range(args.count):
        counts.append((int(rng.choice(args.vehicles)), int(rng.choice(args.obstacles)), 1))
    scen = scenario_pool(counts, args.seed, cfg, id_offset=args.id_offset)
    storage.save_scenarios(args.out, scen, meta=dict(seed=args.seed, vehicles=args.vehicles,
                                                     obstacles=args.obstacles, count=args.count))
    print(f"wrote {len(scen)} scenarios to {args.out}")


def cmd_label(args):
    cfg = _config(args)
    _require(args.scenarios, args.model)
    scen = storage.load_scenarios(args.scenarios)
    model = storage.load_model(args.model) if args.model else None
    if args.warm == "policy" and model is None:
        raise MvnavError("--warm policy requires --model")
    ds = build_dataset(scen, args.warm, cfg, model=model, seed=args.seed, jobs=args.jobs,
                       keep_trajectories=bool(args.telemetry))
    storage.save_dataset(args.out, ds.samples, cfg.hash(), args.seed,
                         meta=dict(warm_source=args.warm, scenarios=os.path.basename(args.scenarios)))
    storage.save_manifest(_sidecar(args.out, ".manifest.json"), ds.manifest, kind="mvnav-dataset-manifest")
    if args.telemetry:
        write_csv(args.telemetry, telemetry_rows(ds.trajectories),
                  ["scenario_id", "step", "warm_source", "solve_time", "iterations", "warm_time", "init_cost",
                   "final_cost"])
    print(f"labelled {len(scen)} scenarios -> {len(ds.samples)} samples in {args.out}")


def cmd_train(args):
    cfg = _config(args)
    _require(*args.dataset, args.init_model)
    samples = []
    for p in args.dataset:
        samples.extend(storage.load_dataset(p))
    tc = cfg.train
    if args.lr is not None or args.val_split is not None or args.batch_size is not None:
        cfg = cfg.replace("train", lr=args.lr if args.lr is not None else tc.lr,
                          val_split=args.val_split if args.val_split is not None else tc.val_split,
                          batch_size=args.batch_size or tc.batch_size)
    init = storage.load_model(args.init_model) if args.init_model else None
    res = train_on(samples, cfg, seed=args.seed, init_model=init, epochs=args.epochs,
                   log_fn=log.info if args.verbose else None)
    storage.save_model(args.out_model, res.model)
    rows = [dict(epoch=0, train_loss=float("nan"), val_loss=res.initial_val_loss)]
    rows += [dict(epoch=i + 1, train_loss=a, val_loss=b) for i, (a, b) in enumerate(zip(res.train_loss, res.val_loss))]
    write_csv(_sidecar(args.out_model, ".loss.csv"), rows, ["epoch", "train_loss", "val_loss"])
    print(f"trained on {len(samples)} samples; best epoch {res.best_epoch}; model -> {args.out_model}")


def cmd_mine(args):
    cfg = _config(args)
    _require(args.model, args.pool)
    model = storage.load_model(args.model)
    ranked = mine(model, storage.load_scenarios(args.pool), cfg.sim, cfg.kinematics)
    storage.save_manifest(args.out_ranking, ranking_manifest(ranked, os.path.abspath(args.pool)), kind="mvnav-ranking")
    print(f"ranked {len(ranked)} scenarios -> {args.out_ranking}")


def cmd_select(args):
    _require(args.ranking)
    man = storage.load_manifest(args.ranking, kind="mvnav-ranking")
    pool_path = args.pool or man.get("pool")
    _require(pool_path)
    by_id = {s.scenario_id: s for s in storage.load_scenarios(pool_path)}
    ranked = [by_id[e["scenario_id"]] for e in man["entries"]]
    chosen = select_fraction(ranked, args.fraction)
    storage.save_scenarios(args.out, chosen, meta=dict(ranking=os.path.basename(args.ranking),
                                                       fraction=args.fraction))
    print(f"selected {len(chosen)} of {len(ranked)} scenarios -> {args.out}")


EVAL_COLUMNS = ["n_vehicles", "n_obstacles", "episodes", "success_to_goal", "collision_rate", "n_collisions",
                "distance"]


def cmd_eval(args):
    cfg = _config(args)
    _require(args.model)
    model = storage.load_model(args.model)
    batches = [scenario_pool([(v, o, args.episodes)], [args.seed, v, o], cfg, id_offset=0)
               for v in args.vehicles for o in args.obstacles]
    rows = [evaluate_controller(model, b, cfg.sim, cfg.kinematics, keep_logs=True) for b in batches]
    write_csv(args.report, [r.as_dict() for r in rows], EVAL_COLUMNS)
    hist_rows, series = [], []
    for r in rows:
        h = rate_histogram(r.logs, args.bins)
        label = f"{r.n_vehicles}v{r.n_obstacles}o"
        if h.empty:
            hist_rows.append(dict(config=label, bin_left="", bin_right="", count=0, density="", empty=1))
        for a, b, c, d in zip(h.edges[:-1], h.edges[1:], h.counts, h.density):
            hist_rows.append(dict(config=label, bin_left=float(a), bin_right=float(b), count=int(c),
                                  density=float(d), empty=0))
        series.append((label, h))
    write_csv(_sidecar(args.report, ".hist.csv"), hist_rows,
              ["config", "bin_left", "bin_right", "count", "density", "empty"])
    from .plots import histogram_svg
    storage.atomic_write(_sidecar(args.report, ".hist.svg"), histogram_svg(series).encode())
    for r in rows:
        print(f"{r.n_vehicles} vehicles / {r.n_obstacles} obstacles: success {r.success_to_goal:.4f} "
              f"collision rate {r.collision_rate:.4e}")


def cmd_bench_opt(args):
    cfg = _config(args)
    _require(args.model)
    model = storage.load_model(args.model)
    rows = []
    for v in args.vehicles:
        for o in args.obstacles:
            scen = scenario_pool([(v, o, args.episodes)], [args.seed, v, o], cfg)
            bench = warm_start_benchmark(model, scen, cfg, steps=args.steps, stride=args.stride,
                                         repeats=args.repeats)
            rows.append(dict(n_vehicles=v, n_obstacles=o, **bench.summary()))
    cols = ["n_vehicles", "n_obstacles", "steps", "mean_time_shifted", "mean_time_policy", "time_ratio",
            "median_iter_shifted", "median_iter_policy", "mean_iter_shifted", "mean_iter_policy"]
    write_csv(args.report, rows, cols)
    for r in rows:
        print(f"{r['n_vehicles']}v{r['n_obstacles']}o: shifted {r['mean_time_shifted']:.5f}s "
              f"policy {r['mean_time_policy']:.5f}s ratio {r['time_ratio']:.3f}")


def cmd_noise_sweep(args):
    cfg = _config(args)
    _require(args.model)
    model = storage.load_model(args.model)
    batches = [scenario_pool([(v, o, args.episodes)], [args.seed, v, o], cfg)
               for v in args.vehicles for o in args.obstacles]
    out, rel = noise_sweep(model, batches, args.alphas, args.beta, args.seed, cfg.sim, cfg.kinematics)
    rows = []
    for a, evs in out.items():
        for r, q in zip(evs, rel[a]):
            rows.append(dict(alpha=a, beta_deg=args.beta, relative_success=q, **r.as_dict()))
    write_csv(args.report, rows, ["alpha", "beta_deg"] + EVAL_COLUMNS + ["relative_success"])
    from .plots import noise_svg
    storage.atomic_write(_sidecar(args.report, ".svg"), noise_svg(out, rel).encode())
    for a, evs in out.items():
        print(f"alpha {a:.2f}: " + ", ".join(f"{r.n_vehicles}v{r.n_obstacles}o {r.success_to_goal:.4f}" for r in evs))


def cmd_pipeline(args):
    from .pipeline import run_pipeline
    run_pipeline(args.workdir, config_path=args.config, scale=args.scale, seed=args.seed, jobs=args.jobs)


# -- parser -----------------------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="mvnav", description=__doc__.splitlines()[0])
    p.add_argument("--config", help="YAML/JSON file overriding default settings")
    p.add_argument("--jobs", type=int, default=1, help="worker processes for per-scenario work (default 1)")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate random scenarios")
    g.add_argument("--vehicles", type=_int_list, required=True, help="vehicle counts, e.g. 3 or 3,4")
    g.add_argument("--obstacles", type=_int_list, default=[0], help="obstacle counts (default 0)")
    g.add_argument("--count", type=int, required=True, help="number of scenarios")
    g.add_argument("--seed", type=int, default=0, help="random seed")
    g.add_argument("--id-offset", type=int, default=0, help="first scenario id")
    g.add_argument("--out", required=True, help="output scenario file (JSON)")
    g.set_defaults(func=cmd_gen)

    l = sub.add_parser("label", help="label scenarios with the receding-horizon optimiser")
    l.add_argument("--scenarios", required=True, help="scenario file")
    l.add_argument("--warm", choices=["shifted", "policy"], default="shifted", help="warm-start source")
    l.add_argument("--model", help="weight archive (required for --warm policy)")
    l.add_argument("--seed", type=int, default=0, help="recorded in the dataset header")
    l.add_argument("--out", required=True, help="output dataset (JSON lines)")
    l.add_argument("--telemetry", help="optional per-step timing CSV")
    l.set_defaults(func=cmd_label)

    t = sub.add_parser("train", help="train the GNN policy by imitation")
    t.add_argument("--dataset", nargs="+", required=True, help="one or more dataset files")
    t.add_argument("--epochs", type=int, default=None, help="maximum epochs")
    t.add_argument("--lr", type=float, default=None, help="learning rate")
    t.add_argument("--batch-size", type=int, default=None, help="mini-batch size")
    t.add_argument("--seed", type=int, default=0, help="init/shuffle seed")
    t.add_argument("--val-split", type=float, default=None, help="validation fraction")
    t.add_argument("--init-model", help="start from these weights instead of a fresh model")
    t.add_argument("--out-model", required=True, help="output weight archive")
    t.set_defaults(func=cmd_train)

    m = sub.add_parser("mine", help="rank a scenario pool by policy difficulty")
    m.add_argument("--model", required=True, help="pretrained weight archive")
    m.add_argument("--pool", required=True, help="scenario file")
    m.add_argument("--out-ranking", required=True, help="output ranking manifest (JSON)")
    m.set_defaults(func=cmd_mine)

    s = sub.add_parser("select", help="take the hardest fraction of a ranking")
    s.add_argument("--ranking", required=True, help="ranking manifest from 'mine'")
    s.add_argument("--fraction", type=float, required=True, help="fraction in (0, 1]")
    s.add_argument("--pool", help="scenario file (default: the pool recorded in the ranking)")
    s.add_argument("--out", required=True, help="output scenario file")
    s.set_defaults(func=cmd_select)

    e = sub.add_parser("eval", help="closed-loop evaluation of a model")
    e.add_argument("--model", required=True, help="weight archive")
    e.add_argument("--vehicles", type=_int_list, required=True, help="vehicle counts, e.g. 5,6")
    e.add_argument("--obstacles", type=_int_list, default=[0], help="obstacle counts")
    e.add_argument("--episodes", type=int, default=100, help="episodes per configuration")
    e.add_argument("--seed", type=int, default=0, help="scenario seed")
    e.add_argument("--bins", type=int, default=20, help="histogram bins")
    e.add_argument("--report", required=True, help="output CSV (+ .hist.csv / .hist.svg)")
    e.set_defaults(func=cmd_eval)

    b = sub.add_parser("bench-opt", help="compare policy and shifted warm starts")
    b.add_argument("--model", required=True, help="weight archive for the policy warm start")
    b.add_argument("--vehicles", type=_int_list, default=[2], help="vehicle counts")
    b.add_argument("--obstacles", type=_int_list, default=[0], help="obstacle counts")
    b.add_argument("--episodes", type=int, default=5, help="scenarios per configuration")
    b.add_argument("--steps", type=int, default=None, help="MPC steps per scenario (default: episode length)")
    b.add_argument("--stride", type=int, default=1, help="benchmark every n-th step")
    b.add_argument("--repeats", type=int, default=1, help="timing repeats per instance")
    b.add_argument("--seed", type=int, default=0, help="scenario seed")
    b.add_argument("--report", required=True, help="output CSV")
    b.set_defaults(func=cmd_bench_opt)

    n = sub.add_parser("noise-sweep", help="success rate under steering noise")
    n.add_argument("--model", required=True, help="weight archive")
    n.add_argument("--alphas", type=_float_list, default=[0.0, 0.1, 0.2, 0.3], help="noise scales")
    n.add_argument("--beta", type=float, default=2.0, help="noise variance floor, degrees^2")
    n.add_argument("--vehicles", type=_int_list, default=[8], help="vehicle counts")
    n.add_argument("--obstacles", type=_int_list, default=[0], help="obstacle counts")
    n.add_argument("--episodes", type=int, default=100, help="episodes per configuration")
    n.add_argument("--seed", type=int, default=0, help="scenario and noise seed")
    n.add_argument("--report", required=True, help="output CSV (+ .svg)")
    n.set_defaults(func=cmd_noise_sweep)

    pl = sub.add_parser("pipeline", help="run gen -> label -> train -> mine -> select -> label -> train -> eval")
    pl.add_argument("--workdir", required=True, help="directory for every artifact")
    pl.add_argument("--scale", choices=["tiny", "desk"], default="desk", help="experiment size")
    pl.add_argument("--seed", type=int, default=0, help="master seed")
    pl.set_defaults(func=cmd_pipeline)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except FileNotFoundError as exc:
        print(f"mvnav: error: missing file: {exc.filename or exc}", file=sys.stderr)
        return EXIT_MISSING
    except StorageError as exc:
        print(f"mvnav: error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except (MvnavError, ValueError) as exc:
        print(f"mvnav: error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
