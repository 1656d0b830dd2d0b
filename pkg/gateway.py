#!/usr/bin/env python3
"""
Imaging gateway simulator - command-line entry point

    gateway.py generate --config cfg.yaml --out run/
    gateway.py simulate --config cfg.yaml --out run/ [--trace T --index I]
    gateway.py report   --csv run/experiment.csv --out run/report/
"""

import argparse
import logging
import sys
from typing import Dict, List, Optional

from config import Config
from handlers.command_handler import cmd_generate, cmd_report, cmd_simulate
from handlers.decorators import handle_errors
from utils.logging_config import setup_logging

logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gateway", description="Cloud imaging gateway cache simulator")
    commands = parser.add_subparsers(dest="command", required=True)

    def common(sub: argparse.ArgumentParser) -> None:
        sub.add_argument("--config", help="YAML configuration file")
        sub.add_argument("--out", default="out", help="output directory (default: out)")
        sub.add_argument("--log-level", help="override logging.level")

    generate = commands.add_parser("generate", help="write trace, index and ground-truth labels")
    common(generate)
    generate.add_argument("--seed", type=int, help="workload seed")

    simulate = commands.add_parser("simulate", help="run the cache-size sweep over a trace")
    common(simulate)
    simulate.add_argument("--trace", help="trace file (default: <out>/trace.jsonl)")
    simulate.add_argument("--index", help="repository index file (default: <out>/index.jsonl)")
    simulate.add_argument("--seed", type=int, help="experiment seed")
    simulate.add_argument("--cache-sizes", help="comma-separated cache fractions of the repository")
    simulate.add_argument("--reps", type=int, help="repetitions per cache size")
    simulate.add_argument("--workers", type=int, help="worker processes")
    simulate.add_argument("--no-prefetch", action="store_true", help="run configuration 1 only")
    simulate.add_argument("--static-rules", action="store_true", help="add the static-rule baseline")
    simulate.add_argument("--dump-cache", action="store_true", help="write cache_state.jsonl")
    simulate.add_argument("--message-log", action="store_true", help="write messages.jsonl")
    simulate.add_argument("--checkpoint-dir", help="save the final models here")

    report = commands.add_parser("report", help="aggregate an experiment CSV")
    common(report)
    report.add_argument("--csv", required=True, help="experiment.csv written by simulate")
    return parser


def overrides_from_args(args: argparse.Namespace) -> Dict[str, object]:
    """Flags mapped to dotted configuration keys; unset flags are skipped"""
    overrides: Dict[str, object] = {"logging.level": getattr(args, "log_level", None)}
    if args.command == "generate":
        overrides["workload.seed"] = args.seed
    elif args.command == "simulate":
        overrides["experiment.seed"] = args.seed
        overrides["experiment.cache_fractions"] = args.cache_sizes
        overrides["experiment.repetitions"] = args.reps
        overrides["experiment.workers"] = args.workers
        if args.no_prefetch:
            overrides["prefetch.enabled"] = False
        if args.static_rules:
            overrides["prefetch.static_rules"] = True
    return overrides


@handle_errors
def run(args: argparse.Namespace) -> int:
    config = Config(args.config, overrides_from_args(args))
    setup_logging(config.logging.level, config.logging.debug)
    logger.info(f"Starting {args.command}")

    if args.command == "generate":
        code = cmd_generate(config, args.out)
    elif args.command == "simulate":
        code = cmd_simulate(config, args.out, args.trace, args.index,
                            dump_cache=args.dump_cache, checkpoint_dir=args.checkpoint_dir,
                            message_log=args.message_log)
    else:
        code = cmd_report(args.csv, args.out, config)

    if code == 0:
        logger.info(f"Finished {args.command}")
    return code


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging()
    return run(args)


if __name__ == '__main__':
    sys.exit(main())
