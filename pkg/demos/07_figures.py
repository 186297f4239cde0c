"""Render SVG figures from a tiny sweep via the frontend package.

Runs a fast bigram sweep plus the failure and linear-dynamics
experiments, writes figure specs, and invokes the frontend renderer
(requires `npm run build` in frontend/ first).
"""

import json
import os
import subprocess
import sys

from icl_lab.harness import ExperimentConfig, run_failure_case, run_lds, run_sweep

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
OUT = os.path.join(ROOT, "runs", "demo_figures")
os.makedirs(OUT, exist_ok=True)

cfg = ExperimentConfig()
cfg.V, cfg.h, cfg.family_size = 8, 3, 4
cfg.K_grid, cfg.N_grid, cfg.T_grid, cfg.Tp_grid = (2, 3), (3, 6), (16,), (4, 6, 8)
cfg.arch_kind = "tabular_bigram"
cfg.T_prime, cfg.batch_size, cfg.eval_prompts = 60, 3, 64
cfg.mc_topics, cfg.mc_prompts, cfg.demo_len = 2, 2, 4
cfg.seeds = (0, 1, 2)
cfg.failure_T_prime = 60
cfg.lds_T, cfg.lds_T_prime = 10, 500

sweep_csv = run_sweep(cfg, OUT)
failure_csv = run_failure_case(cfg, OUT)
lds_csv = run_lds(cfg, OUT)
print(f"wrote {sweep_csv}, {failure_csv}, {lds_csv}")

specs = {
    "sweep.json": {
        "input": sweep_csv, "kind": "line", "x": "N", "y": "icl_accuracy",
        "groupBy": "T_p", "out": os.path.join(OUT, "accuracy_vs_N.svg"),
        "title": "held-out accuracy vs sequences per topic",
    },
    "failure.json": {
        "input": failure_csv, "kind": "bar", "x": "arm", "y": "icl_accuracy",
        "baseline": "chance", "out": os.path.join(OUT, "failure.svg"),
        "title": "structured vs random-transition pre-training",
    },
    "lds.json": {
        "input": lds_csv, "kind": "line", "x": "N",
        "y": ["overall_mse", "icl_last_mse"], "out": os.path.join(OUT, "lds.svg"),
        "title": "linear dynamics: overall vs last-position loss",
    },
}
spec_paths = []
for name, spec in specs.items():
    path = os.path.join(OUT, name)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(spec, f, indent=2)
    spec_paths.append(path)

cli = os.path.join(ROOT, "frontend", "dist", "cli.js")
if not os.path.exists(cli):
    print("frontend not built; run `npm install && npm run build` in frontend/ first")
    sys.exit(1)
args = ["node", cli, "render"]
for p in spec_paths:
    args += ["--spec", p]
subprocess.run(args, check=True)
print("figures written to", OUT)
