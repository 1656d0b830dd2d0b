#!/usr/bin/env python3
"""
Command handlers: generate, simulate, report
"""

import json
import logging
from pathlib import Path
from typing import Optional, Union

from config import Config
from database.validation import validate_trace
from errors import ValidationFailed
from simulation import RunArtifacts, derive_seeds, run_experiment, run_simulation
from utils.logging_config import setup_logging
from workload import WorkloadGenerator, read_index, read_trace, write_index, write_labels, write_trace
from .decorators import handle_errors
from .report_handler import write_report

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

TRACE_FILE = "trace.jsonl"
INDEX_FILE = "index.jsonl"
LABELS_FILE = "labels.jsonl"


def prepare_run(config: Config, out_dir: PathLike) -> Path:
    """Create out_dir, copy the resolved configuration into it and log there too"""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    setup_logging(config.logging.level, config.logging.debug, log_file=out_dir / "gateway.log")
    config.dump(out_dir / "config.yaml")
    return out_dir


@handle_errors
def cmd_generate(config: Config, out_dir: PathLike) -> None:
    """Write trace, repository index and ground-truth labels"""
    out_dir = prepare_run(config, out_dir)
    logger.info(f"Generating workload (seed {config.workload.seed}) into {out_dir}")

    workload = WorkloadGenerator(config.workload).generate()
    report = validate_trace(workload.events, workload.index)
    if not report.is_valid:
        raise ValidationFailed(report)

    write_trace(workload.events, out_dir / TRACE_FILE)
    write_index(workload.index, out_dir / INDEX_FILE)
    write_labels(workload.labels, out_dir / LABELS_FILE)
    logger.info(
        f"Generated {len(workload.index)} studies ({workload.index.total_bytes} bytes), "
        f"{workload.query_count} queries and {workload.retrieve_count} retrieves"
    )


@handle_errors
def cmd_simulate(config: Config, out_dir: PathLike, trace_path: Optional[PathLike] = None,
                 index_path: Optional[PathLike] = None, dump_cache: bool = False,
                 checkpoint_dir: Optional[PathLike] = None, message_log: bool = False) -> None:
    """
    Run the cache-size sweep and write experiment.csv and summary.json.

    Trace and index default to the files generate wrote into out_dir. With
    prefetch.enabled false only configuration 1 runs. Any of the artifact
    options reruns the first repetition at the largest cache fraction with
    those artifacts attached.
    """
    out_dir = prepare_run(config, out_dir)
    trace_path = Path(trace_path) if trace_path else out_dir / TRACE_FILE
    index_path = Path(index_path) if index_path else out_dir / INDEX_FILE

    logger.info(f"Simulating {trace_path} against {index_path}")
    index = read_index(index_path)
    try:
        _simulate(config, out_dir, read_trace(trace_path), index, dump_cache, checkpoint_dir, message_log)
    finally:
        index.close()


def _simulate(config: Config, out_dir: Path, trace, index, dump_cache: bool,
              checkpoint_dir: Optional[PathLike], message_log: bool) -> None:
    report = validate_trace(trace, index)
    if not report.is_valid:
        raise ValidationFailed(report)

    experiment = config.experiment
    learning = config.prefetch.enabled
    result = run_experiment(trace, index, experiment.cache_fractions, experiment.repetitions, config)
    result.write(out_dir)
    with open(out_dir / "runs.json", "w", encoding="utf-8") as f:
        json.dump([r.to_dict() for r in result.reports], f, indent=2, sort_keys=True)
        f.write("\n")

    if dump_cache or checkpoint_dir or message_log:
        fraction = max(experiment.cache_fractions)
        cfg = config.sim_config(int(round(fraction * index.total_bytes)), learning,
                                seed=derive_seeds(experiment.seed, 1)[0])
        artifacts = RunArtifacts(
            message_log=out_dir / "messages.jsonl" if message_log else None,
            training_log=out_dir / "training_log.jsonl" if message_log and learning else None,
            cache_dump=out_dir / "cache_state.jsonl" if dump_cache else None,
            checkpoint_dir=Path(checkpoint_dir) if checkpoint_dir else None,
        )
        logger.info(f"Writing artifacts of the {cfg.label} run at cache fraction {fraction}")
        run_simulation(trace, index, cfg, artifacts)


@handle_errors
def cmd_report(experiment_csv: PathLike, out_dir: PathLike, config: Optional[Config] = None) -> None:
    """Write hit_ratio.csv, retrieval_time.csv and comparison.json"""
    config = config or Config()
    out_dir = prepare_run(config, out_dir)
    written = write_report(experiment_csv, out_dir)
    for name, path in written.items():
        logger.info(f"Report {name}: {path}")
