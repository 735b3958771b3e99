"""Command-line entry point: training, evaluation, toy simulation, analyses.

Exit codes: 0 success, 1 usage error (bad flags, bad config, missing
inputs), 2 runtime error (failures while executing a valid request).
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from typing import List, Optional

from .common import ConfigError, UsageError

__all__ = ["run_cli", "main"]


class _Parser(argparse.ArgumentParser):
    """argparse variant that reports usage problems as UsageError."""

    def error(self, message):
        raise UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="multiskill", description=__doc__)
    sub = parser.add_subparsers(dest="command")

    train = sub.add_parser("train", help="train an agent")
    train.add_argument("--config", help="key=value config file")
    train.add_argument("--seed", type=int, help="override the run seed")
    train.add_argument("--out", help="output directory for run artifacts")
    train.add_argument(
        "--override",
        action="append",
        default=[],
        metavar="K=V",
        help="config override, repeatable",
    )
    train.add_argument("--resume", help="checkpoint directory to resume from")

    evaluate = sub.add_parser("eval", help="evaluate a checkpoint greedily")
    evaluate.add_argument("--ckpt", required=True, help="checkpoint directory")
    evaluate.add_argument("--episodes", type=int, required=True)

    toysim = sub.add_parser("toysim", help="run the precision-smoothness toy simulation")
    toysim.add_argument("--path", required=True, choices=["two_turn", "s_curve"])
    toysim.add_argument("--agent", required=True, choices=["short", "long", "contextual"])
    toysim.add_argument("--seeds", type=int, required=True, help="number of seeds (0..N-1)")
    toysim.add_argument("--ticks", type=int, default=100)
    toysim.add_argument("--scale", type=float, default=1.0)
    toysim.add_argument("--noise", type=float, default=None, help="subgoal noise sigma")
    toysim.add_argument("--out", default=".", help="output directory")

    analyze = sub.add_parser("analyze", help="choice shares and cluster purity for a run")
    analyze.add_argument("--run", required=True, help="run directory")
    analyze.add_argument("--window", type=int, default=None, help="choice-share window (steps)")
    return parser


def _cmd_train(args) -> int:
    from .config import TrainConfig
    from .trainer import run_experiment

    if args.resume:
        if args.config or args.seed is not None or args.out or args.override:
            raise UsageError("--resume cannot be combined with config overrides")
        summary = run_experiment(resume=args.resume)
    else:
        file_text = ""
        if args.config:
            if not os.path.exists(args.config):
                raise UsageError(f"config file not found: {args.config}")
            with open(args.config) as fh:
                file_text = fh.read()
        overrides: List[str] = list(args.override)
        if args.seed is not None:
            overrides.append(f"seed={args.seed}")
        if args.out:
            overrides.append(f"out_dir={args.out}")
        cfg = TrainConfig.from_sources(file_text, overrides)
        summary = run_experiment(cfg)
        summary = {"out_dir": cfg.out_dir, **summary}
    print(json.dumps(summary, sort_keys=True))
    return 0


def _cmd_eval(args) -> int:
    from .trainer import Trainer

    if not os.path.isdir(args.ckpt):
        raise UsageError(f"checkpoint directory not found: {args.ckpt}")
    if args.episodes <= 0:
        raise UsageError("--episodes must be positive")
    trainer = Trainer.from_checkpoint(args.ckpt)
    try:
        stats = trainer.evaluate(args.episodes)
    finally:
        trainer.close()
    print(json.dumps(stats, sort_keys=True))
    return 0


def _cmd_toysim(args) -> int:
    from .toysim import ToyAgentSpec, build_path, run_sweep

    if args.seeds <= 0:
        raise UsageError("--seeds must be positive")
    kwargs = {} if args.noise is None else {"noise": args.noise}
    agent = ToyAgentSpec(args.agent, **kwargs)
    path = build_path(args.path, args.scale)
    rows = run_sweep(agent, path, range(args.seeds), ticks=args.ticks)

    out_dir = os.path.join(args.out, "toysim")
    os.makedirs(out_dir, exist_ok=True)
    out_path = os.path.join(out_dir, f"{args.path}_{args.agent}.csv")
    with open(out_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["seed", "path_error", "heading_variance", "short_share"])
        for seed, error, variance, share in rows:
            writer.writerow([seed, f"{error:.9f}", f"{variance:.9f}", f"{share:.6f}"])
    n = len(rows)
    summary = {
        "csv": out_path,
        "seeds": n,
        "mean_path_error": sum(r[1] for r in rows) / n,
        "mean_heading_variance": sum(r[2] for r in rows) / n,
        "mean_short_share": sum(r[3] for r in rows) / n,
    }
    print(json.dumps(summary, sort_keys=True))
    return 0


def _cmd_analyze(args) -> int:
    from .analyze import analyze_run

    if not os.path.isdir(args.run):
        raise UsageError(f"run directory not found: {args.run}")
    out = analyze_run(args.run, window=args.window)
    summary = {
        "run": args.run,
        "windows": int(out.shares.shape[0]),
        "window_size": out.window_size,
        "share_labels": out.share_labels,
    }
    if out.purity is not None:
        summary["purity"] = out.purity.purity
        summary["k"] = out.purity.k
        summary["purity_txt"] = os.path.join(args.run, "purity.txt")
    print(json.dumps(summary, sort_keys=True))
    return 0


_COMMANDS = {
    "train": _cmd_train,
    "eval": _cmd_eval,
    "toysim": _cmd_toysim,
    "analyze": _cmd_analyze,
}


def run_cli(argv: Optional[List[str]] = None) -> int:
    parser = _build_parser()
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    try:
        args = parser.parse_args(argv)
        if not args.command:
            parser.print_usage(sys.stderr)
            return 1
        return _COMMANDS[args.command](args)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # runtime failure of a valid request
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    raise SystemExit(run_cli())
