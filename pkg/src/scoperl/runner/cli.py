"""Command-line entry point: ``scoperl {train,eval,report,export-memory-stats}``."""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import sys
from collections import defaultdict
from pathlib import Path

import numpy as np

from ..memory import load_memory_file
from .config import ConfigError, load_config
from .experiment import evaluate, train
from .metrics import read_metric_log

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2


def _load(args):
    cfg = load_config(args.config)
    changes = {}
    if getattr(args, "seed", None) is not None:
        changes["seed"] = args.seed
    if getattr(args, "outdir", None) is not None:
        changes["outdir"] = str(args.outdir)
    if getattr(args, "timesteps", None) is not None:
        if args.timesteps < 0:
            raise ConfigError("must be >= 0", "trainer.total_timesteps")
        cfg.trainer = dataclasses.replace(cfg.trainer, total_timesteps=args.timesteps)
    return dataclasses.replace(cfg, **changes)


def cmd_train(args) -> int:
    cfg = _load(args)
    summary = train(cfg, cfg.outdir, headless=args.headless, wall_clock=args.wall_clock,
                    export_memory=args.export_memory)
    if not args.headless:
        print(json.dumps(summary.as_dict(), indent=2, sort_keys=True))
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = _load(args)
    checkpoints = Path(args.checkpoints) if args.checkpoints else Path(cfg.outdir) / "checkpoints"
    results = evaluate(cfg, checkpoints, episodes=args.episodes)
    print(json.dumps({"episodes": args.episodes, "mean_return": results}, indent=2, sort_keys=True))
    return EXIT_OK


def summarize_metric_log(path) -> list[dict]:
    """Per-agent episode statistics from a metric log, ordered by first appearance."""
    _, records = read_metric_log(path)
    returns: dict[str, list[float]] = defaultdict(list)
    last_step: dict[str, int] = {}
    for rec in records:
        agent_id = rec["agent_id"]
        last_step[agent_id] = rec["timestep"]
        returns.setdefault(agent_id, [])
        if rec["metric"] == "episode_return" and rec["value"] is not None:
            returns[agent_id].append(rec["value"])
    rows = []
    for agent_id, values in returns.items():
        arr = np.asarray(values, dtype=np.float64)
        has = arr.size > 0
        rows.append({"agent_id": agent_id, "episodes": int(arr.size),
                     "mean_return": float(arr.mean()) if has else float("nan"),
                     "std_return": float(arr.std()) if has else float("nan"),
                     "min_return": float(arr.min()) if has else float("nan"),
                     "max_return": float(arr.max()) if has else float("nan"),
                     "last_100_mean": float(arr[-100:].mean()) if has else float("nan"),
                     "last_timestep": last_step[agent_id]})
    return rows


def cmd_report(args) -> int:
    rows = summarize_metric_log(args.metrics)
    out = Path(args.out) if args.out else Path(args.metrics).with_name("report.csv")
    fields = ["agent_id", "episodes", "mean_return", "std_return", "min_return", "max_return", "last_100_mean",
              "last_timestep"]
    with out.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        writer.writerows(rows)
    print(out)
    return EXIT_OK


def memory_stats(path) -> list[dict]:
    """Per-tensor column statistics of an exported memory file."""
    rows = []
    for name, arr in load_memory_file(path).items():
        arr = np.asarray(arr, dtype=np.float64).reshape(len(arr), -1)
        for d in range(arr.shape[1]):
            col = arr[:, d]
            rows.append({"tensor": name, "dim": d, "mean": float(col.mean()), "std": float(col.std()),
                         "min": float(col.min()), "max": float(col.max())})
    return rows


def cmd_export_memory_stats(args) -> int:
    rows = memory_stats(args.memory)
    out = Path(args.out) if args.out else Path(args.memory).with_suffix(".stats.csv")
    with out.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["tensor", "dim", "mean", "std", "min", "max"])
        writer.writeheader()
        writer.writerows(rows)
    print(out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="scoperl", description="Train and evaluate reinforcement learning agents.")
    sub = parser.add_subparsers(dest="command", required=True)

    def run_flags(p):
        p.add_argument("--config", required=True, help="config file or bundled config name")
        p.add_argument("--seed", type=int)
        p.add_argument("--outdir")
        p.add_argument("--timesteps", type=int, help="override trainer.total_timesteps")
        p.add_argument("--headless", action="store_true", help="no progress output")

    p = sub.add_parser("train", help="run a configured experiment")
    run_flags(p)
    p.add_argument("--wall-clock", action="store_true", help="stamp metric records with wall-clock time")
    p.add_argument("--export-memory", choices=["csv", "sktn"], help="also export each memory after training")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="mean return of saved policies")
    run_flags(p)
    p.add_argument("--checkpoints", help="checkpoint directory (default: <outdir>/checkpoints)")
    p.add_argument("--episodes", type=int, default=10)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", help="per-agent summary CSV from a metric log")
    p.add_argument("--metrics", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("export-memory-stats", help="column statistics of an exported memory file")
    p.add_argument("--memory", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_export_memory_stats)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - report any runtime failure as exit 1
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
