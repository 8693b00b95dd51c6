"""Command line entry point: run one experiment config and write per-episode metrics."""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from typing import Optional, Sequence

from .delay import DelayDistribution
from .errors import ConfigError
from .harness import (
    AgentConfig,
    EnvConfig,
    ExperimentConfig,
    converged_return,
    optimal_value,
    run_experiment,
    write_metrics,
)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="delayed-psvi", description=__doc__)
    p.add_argument("--config", metavar="PATH", help="JSON file with ExperimentConfig fields")
    p.add_argument("--env", choices=("synthetic", "riverswim"))
    p.add_argument("--agent", choices=("psvi", "lpsvi", "ucbvi"))
    p.add_argument("--delay", metavar="SPEC", help="e.g. constant:0, poisson:50, pareto:1.0:500, "
                   "multinomial:10,20,30:0.5,0.3,0.2")
    p.add_argument("--episodes", type=int)
    p.add_argument("--horizon", type=int)
    p.add_argument("--seed", type=int, action="append", dest="seeds", help="repeatable")
    p.add_argument("--out", metavar="PATH", help="metrics CSV (default: stdout)")
    return p


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    """File values first, then flag overrides."""
    config = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    updates = {}
    if args.env is not None and args.env != config.env.name:
        updates["env"] = EnvConfig(name=args.env)
    if args.agent is not None and args.agent != config.agent.name:
        updates["agent"] = AgentConfig(name=args.agent)
    if args.delay is not None:
        updates["delay"] = DelayDistribution.parse(args.delay)
    if args.episodes is not None:
        updates["episodes"] = args.episodes
    if args.horizon is not None:
        updates["horizon"] = args.horizon
    if args.seeds:
        updates["seeds"] = tuple(args.seeds)
    if args.out is not None:
        updates["output"] = args.out
    return replace(config, **updates)


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = resolve_config(args)
        rows = run_experiment(config)
    except (ConfigError, OSError, json.JSONDecodeError) as exc:
        print(f"delayed-psvi: config error: {exc}", file=sys.stderr)
        return 2
    except (ArithmeticError, ValueError, RuntimeError) as exc:
        print(f"delayed-psvi: numeric failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    if config.output:
        write_metrics(rows, config.output)
    else:
        write_metrics(rows, sys.stdout)
    v_star = optimal_value(config)
    print(f"V* = {v_star:.4f}  converged return = {converged_return(rows):.4f}  "
          f"final cum regret = {sum(r.cum_regret for r in rows if r.episode == config.episodes) / len(config.seeds):.4f}",
          file=sys.stderr)
    return 0
