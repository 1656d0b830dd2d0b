#!/usr/bin/env python3
"""
Cache-size sweep: every cache fraction x configuration x repetition

Repetition r uses the same derived seed in every cell so configurations are
compared on common random numbers. Cells are independent and may run in
worker processes; results are merged after all of them finish.
"""

import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from config import Config
from database.models import TraceEvent
from database.repository_service import RepositoryIndex
from .engine import SimReport, run_simulation

logger = logging.getLogger(__name__)

CSV_COLUMNS = [
    "cache_fraction", "config", "repetition", "hit_ratio", "retrieval_time_per_image_s",
    "bytes_prefetched", "prefetch_precision", "evictions",
]
METRICS = CSV_COLUMNS[3:]
CONFIG_ORDER = ("config1", "config2", "static")


def derive_seeds(base_seed: int, repetitions: int) -> List[int]:
    """Independent, reproducible per-repetition seeds"""
    children = np.random.SeedSequence(base_seed).spawn(repetitions)
    return [int(child.generate_state(1)[0]) for child in children]


@dataclass
class ExperimentReport:
    rows: List[Dict] = field(default_factory=list)
    reports: List[SimReport] = field(default_factory=list)

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.rows, columns=CSV_COLUMNS)
        if frame.empty:
            return frame
        frame["_order"] = frame["config"].map({c: i for i, c in enumerate(CONFIG_ORDER)})
        frame = frame.sort_values(["cache_fraction", "_order", "repetition"], kind="mergesort")
        return frame.drop(columns="_order").reset_index(drop=True)

    def summary(self) -> Dict:
        return summarize(self.to_frame())

    def write(self, out_dir: Union[str, Path]) -> Tuple[Path, Path]:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        csv_path = out_dir / "experiment.csv"
        json_path = out_dir / "summary.json"
        self.to_frame().to_csv(csv_path, index=False, lineterminator="\n")
        json_path.write_text(json.dumps(self.summary(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        logger.info(f"Wrote {len(self.rows)} rows to {csv_path} and summary to {json_path}")
        return csv_path, json_path


def summarize(frame: pd.DataFrame) -> Dict:
    """Mean and (population) standard deviation of every metric per cell"""
    cells = []
    grouped = frame.groupby(["cache_fraction", "config"], sort=False)
    for (fraction, config), group in grouped:
        cell = {"cache_fraction": float(fraction), "config": config, "repetitions": int(len(group))}
        for metric in METRICS:
            values = group[metric].astype(float)
            cell[f"{metric}_mean"] = float(values.mean())
            cell[f"{metric}_std"] = float(values.std(ddof=0))
        cells.append(cell)
    return {"cells": cells}


def _run_cell(args) -> Tuple[Dict, SimReport]:
    trace, index, cfg, fraction, repetition = args
    report = run_simulation(trace, index, cfg)
    row = {
        "cache_fraction": fraction,
        "config": cfg.label,
        "repetition": repetition,
        "hit_ratio": report.hit_ratio,
        "retrieval_time_per_image_s": report.retrieval_time_per_image_s,
        "bytes_prefetched": report.bytes_prefetched,
        "prefetch_precision": report.prefetch_precision,
        "evictions": report.evictions,
    }
    return row, report


def run_experiment(trace: Sequence[TraceEvent], index: RepositoryIndex, cache_sizes: Sequence[float],
                   repetitions: int, base_cfg: Config, include_static: Optional[bool] = None,
                   workers: Optional[int] = None, include_prefetch: Optional[bool] = None) -> ExperimentReport:
    """
    Run configuration 1 (LRU only) and configuration 2 (LRU with both
    prefetching modes), plus the static-rule baseline when enabled, for each
    cache size given as a fraction of the repository bytes.

    include_prefetch=False (default: the prefetch.enabled setting) keeps
    configuration 1 alone.
    """
    include_static = base_cfg.prefetch.static_rules if include_static is None else include_static
    include_prefetch = base_cfg.prefetch.enabled if include_prefetch is None else include_prefetch
    workers = base_cfg.experiment.workers if workers is None else workers
    seeds = derive_seeds(base_cfg.experiment.seed, repetitions)
    variants = [(False, False)]
    if include_prefetch:
        variants.append((True, False))
        if include_static:
            variants.append((False, True))

    trace_list = list(trace)
    tasks = []
    for fraction in cache_sizes:
        capacity = int(round(fraction * index.total_bytes))
        for prefetch_enabled, static_rules in variants:
            for repetition, seed in enumerate(seeds):
                cfg = base_cfg.sim_config(capacity, prefetch_enabled, seed=seed, static_rules=static_rules)
                tasks.append((trace_list, index, cfg, fraction, repetition))

    logger.info(f"Running {len(tasks)} simulation(s): {len(cache_sizes)} cache size(s), "
                f"{len(variants)} configuration(s), {repetitions} repetition(s)")

    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_cell, tasks))
    else:
        results = [_run_cell(task) for task in tasks]

    report = ExperimentReport()
    for row, sim_report in results:
        report.rows.append(row)
        report.reports.append(sim_report)
    return report
