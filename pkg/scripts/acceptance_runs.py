"""Produce the cached training runs the acceptance suite reads.

Runs a serial campaign into ``runs/acceptance/``:

  corridor_mrs_s{0,1,2}      multi-resolution agent, dense corridor
  corridor_res{L}_s{0,1,2}   single-resolution ablations, L in {64, 32, 16, 8}
  maze_mrs_s{0,1,2}          multi-resolution agent, sparse maze
  maze_flat_s{0,1,2}         flat goal-perturbation baseline, sparse maze

Each run is skipped if its metrics.jsonl already ends in a summary record,
so the script can be re-run after an interruption and only the missing runs
execute. Positional arguments filter runs by substring (e.g. ``corridor``).
Expect a few hours of wall clock on a single core for the full set.
"""

from __future__ import annotations

import json
import os
import sys
import time

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from multiskill.config import TrainConfig  # noqa: E402
from multiskill.trainer import run_experiment  # noqa: E402

RUNS_DIR = os.path.join(os.path.dirname(__file__), "..", "runs", "acceptance")

# Desk-scale network/regime shared by every run. The entropy knobs hold the
# worker's exploration noise near sigma ~ 0.3 per dim so the greedy mode used
# by evaluation tracks the behavior policy; the library defaults target a far
# larger action space and rail the squashed log-std head at this scale.
BASE = [
    "mlp_sizes=64,64",
    "latent_groups=4",
    "latent_classes=4",
    "skill_pairs_cap=128",
    "train_every=8",
    "target_entropy=0.1",
    "entropy_kappa=0.01",
    "entropy_coeff_floor=0.001",
    "log_every=2000",
]

CORRIDOR_STEPS = 100_000
MAZE_STEPS = 200_000

FIXED_RESOLUTIONS = (64, 32, 16, 8)
SEEDS = (0, 1, 2)


def _corridor(overrides):
    return [
        "env_id=corridor",
        f"total_steps={CORRIDOR_STEPS}",
        "eval_every=25000",
        "eval_episodes=3",
        *BASE,
        *overrides,
    ]


def _maze(overrides):
    return [
        "env_id=maze",
        f"total_steps={MAZE_STEPS}",
        "eval_every=50000",
        "eval_episodes=10",
        *BASE,
        *overrides,
    ]


def campaign():
    runs = []
    for seed in SEEDS:
        runs.append((f"corridor_mrs_s{seed}", _corridor([f"seed={seed}"])))
    for res in FIXED_RESOLUTIONS:
        for seed in SEEDS:
            runs.append(
                (
                    f"corridor_res{res}_s{seed}",
                    _corridor([f"seed={seed}", f"skill_resolutions={res}"]),
                )
            )
    for seed in SEEDS:
        runs.append((f"maze_mrs_s{seed}", _maze([f"seed={seed}"])))
    for seed in SEEDS:
        runs.append((f"maze_flat_s{seed}", _maze([f"seed={seed}", "agent=flat"])))
    return runs


def has_summary(run_dir):
    path = os.path.join(run_dir, "metrics.jsonl")
    if not os.path.exists(path):
        return False
    with open(path) as fh:
        for line in fh:
            try:
                if json.loads(line).get("kind") == "summary":
                    return True
            except json.JSONDecodeError:
                return False
    return False


def main():
    os.makedirs(RUNS_DIR, exist_ok=True)
    todo = campaign()
    if len(sys.argv) > 1:  # optional substring filters, e.g. "corridor" or "maze_mrs"
        todo = [(n, o) for n, o in todo if any(pat in n for pat in sys.argv[1:])]
    for name, overrides in todo:
        run_dir = os.path.join(RUNS_DIR, name)
        if has_summary(run_dir):
            print(f"[skip] {name} (summary present)", flush=True)
            continue
        cfg = TrainConfig.from_sources(None, overrides + [f"out_dir={run_dir}"])
        start = time.time()
        print(f"[run ] {name} ...", flush=True)
        summary = run_experiment(cfg)
        mins = (time.time() - start) / 60.0
        print(
            f"[done] {name} in {mins:.1f} min: "
            f"return={summary.get('final_return_mean'):.3f} "
            f"success={summary.get('final_success_rate'):.2f}",
            flush=True,
        )


if __name__ == "__main__":
    main()
