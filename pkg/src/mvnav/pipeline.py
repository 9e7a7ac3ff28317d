"""End-to-end run of the imitation and mining loop through the CLI subcommands.

Order: generate easy scenarios, label them, pretrain, generate a harder pool,
mine it, select the hardest fraction, label that with policy warm starts,
fine-tune, then evaluate, sweep steering noise and benchmark warm starts.
"""
from __future__ import annotations

import logging
import os
import time

log = logging.getLogger(__name__)

SCALES = {
    # keys: easy scenarios, pool size, test episodes per config, epochs, bench scenarios/steps
    "tiny": dict(easy=6, pool=10, test=3, pre_epochs=3, fine_epochs=2, bench=1, bench_steps=6, noise=2,
                 fraction=0.2),
    "desk": dict(easy=40, pool=60, test=20, pre_epochs=60, fine_epochs=30, bench=2, bench_steps=40, noise=20,
                 fraction=0.1),
}

REPORTS = ["telemetry_easy.csv", "pretrained.loss.csv", "ranking.json", "hard.json", "telemetry_hard.csv",
           "final.loss.csv", "eval.csv", "eval.hist.csv", "eval.hist.svg", "noise.csv", "noise.svg", "bench.csv"]


def run_pipeline(workdir, config_path=None, scale="desk", seed=0, jobs=1):
    from .cli import main

    sc = SCALES[scale]
    os.makedirs(workdir, exist_ok=True)
    p = lambda name: os.path.join(workdir, name)
    glob = (["--config", config_path] if config_path else []) + ["--jobs", str(jobs)]
    steps = [
        ["gen", "--vehicles", "1,2", "--count", str(sc["easy"]), "--seed", str(seed), "--out", p("easy.json")],
        ["label", "--scenarios", p("easy.json"), "--warm", "shifted", "--seed", str(seed),
         "--out", p("easy.jsonl"), "--telemetry", p("telemetry_easy.csv")],
        ["train", "--dataset", p("easy.jsonl"), "--epochs", str(sc["pre_epochs"]), "--seed", str(seed),
         "--out-model", p("pretrained.mvnw")],
        ["gen", "--vehicles", "3,4", "--count", str(sc["pool"]), "--seed", str(seed + 1),
         "--id-offset", "100000", "--out", p("pool.json")],
        ["mine", "--model", p("pretrained.mvnw"), "--pool", p("pool.json"), "--out-ranking", p("ranking.json")],
        ["select", "--ranking", p("ranking.json"), "--fraction", str(sc["fraction"]), "--out", p("hard.json")],
        ["label", "--scenarios", p("hard.json"), "--warm", "policy", "--model", p("pretrained.mvnw"),
         "--seed", str(seed), "--out", p("hard.jsonl"), "--telemetry", p("telemetry_hard.csv")],
        ["train", "--dataset", p("easy.jsonl"), p("hard.jsonl"), "--epochs", str(sc["fine_epochs"]),
         "--seed", str(seed), "--init-model", p("pretrained.mvnw"), "--out-model", p("final.mvnw")],
        ["eval", "--model", p("final.mvnw"), "--vehicles", "5,6", "--episodes", str(sc["test"]),
         "--seed", str(seed + 2), "--report", p("eval.csv")],
        ["noise-sweep", "--model", p("final.mvnw"), "--vehicles", "4", "--episodes", str(sc["noise"]),
         "--seed", str(seed + 3), "--report", p("noise.csv")],
        ["bench-opt", "--model", p("pretrained.mvnw"), "--vehicles", "2", "--episodes", str(sc["bench"]),
         "--steps", str(sc["bench_steps"]), "--seed", str(seed + 4), "--report", p("bench.csv")],
    ]
    timings = []
    for argv in steps:
        t0 = time.perf_counter()
        code = main(glob + argv)
        timings.append((argv[0], time.perf_counter() - t0))
        if code != 0:
            raise RuntimeError(f"pipeline step {argv[0]!r} failed with exit code {code}")
    with open(p("pipeline_telemetry.csv"), "w") as fh:
        fh.write("step,seconds\n")
        for name, dt in timings:
            fh.write(f"{name},{dt!r}\n")
    missing = [r for r in REPORTS if not os.path.exists(p(r))]
    if missing:
        raise RuntimeError(f"pipeline finished without reports: {missing}")
    return timings
