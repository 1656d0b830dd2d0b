#!/usr/bin/env python3
"""
Aggregated, plot-ready tables from an experiment CSV

hit_ratio.csv and retrieval_time.csv have one row per cache fraction and a
mean and std column per configuration. comparison.json sets the achieved
retrieval-time reduction against the reported one and checks the crossover
of prefetching at half the cache against plain LRU at the full cache.
"""

import json
import logging
from pathlib import Path
from typing import Dict, Optional, Union

import pandas as pd

from errors import ReportError
from simulation.experiment import CONFIG_ORDER, CSV_COLUMNS

logger = logging.getLogger(__name__)

REPORTED_TIME_REDUCTION_PCT = 73.0
REQUIRED_TIME_REDUCTION_PCT = 25.0
TABLES = {
    "hit_ratio": "hit_ratio.csv",
    "retrieval_time_per_image_s": "retrieval_time.csv",
}


def load_experiment_table(path: Union[str, Path]) -> pd.DataFrame:
    """Read an experiment CSV, rejecting empty or foreign tables"""
    try:
        frame = pd.read_csv(path)
    except FileNotFoundError as e:
        raise ReportError(f"experiment table not found: {path}") from e
    except pd.errors.EmptyDataError as e:
        raise ReportError(f"experiment table is empty: {path}") from e
    except pd.errors.ParserError as e:
        raise ReportError(f"cannot parse experiment table {path}: {e}") from e

    missing = [c for c in CSV_COLUMNS if c not in frame.columns]
    if missing:
        raise ReportError(f"experiment table {path} lacks column(s): {', '.join(missing)}")
    if frame.empty:
        raise ReportError(f"experiment table has no rows: {path}")
    return frame


def aggregate(frame: pd.DataFrame, metric: str) -> pd.DataFrame:
    """Mean and population std of metric per cache fraction, one column pair per configuration"""
    stats = frame.groupby(["cache_fraction", "config"])[metric].agg(
        mean="mean", std=lambda v: v.std(ddof=0),
    )
    table = stats.unstack("config")
    configs = sorted(table.columns.get_level_values("config").unique(),
                     key=lambda c: (CONFIG_ORDER.index(c) if c in CONFIG_ORDER else len(CONFIG_ORDER), c))
    columns = [(stat, config) for config in configs for stat in ("mean", "std")]
    table = table.reindex(columns=pd.MultiIndex.from_tuples(columns))
    table.columns = [f"{config}_{stat}" for stat, config in columns]
    return table.sort_index().reset_index()


def _cell(table: pd.DataFrame, fraction: float, column: str) -> Optional[float]:
    if column not in table.columns:
        return None
    rows = table.loc[table["cache_fraction"] == fraction, column]
    if rows.empty or pd.isna(rows.iloc[0]):
        return None
    return float(rows.iloc[0])


def compare(hit_table: pd.DataFrame, time_table: pd.DataFrame) -> Dict:
    fractions = sorted(float(f) for f in hit_table["cache_fraction"])
    largest = fractions[-1]
    half = next((f for f in fractions if abs(f - largest / 2) < 1e-12), None)

    comparison: Dict = {
        "largest_cache_fraction": largest,
        "reported_time_reduction_pct": REPORTED_TIME_REDUCTION_PCT,
        "required_time_reduction_pct": REQUIRED_TIME_REDUCTION_PCT,
        "achieved_time_reduction_pct": None,
        "meets_required_reduction": None,
        "hit_ratio_gain_by_fraction": {},
        "crossover": None,
    }

    t1 = _cell(time_table, largest, "config1_mean")
    t2 = _cell(time_table, largest, "config2_mean")
    if t1 and t2 is not None:
        reduction = (t1 - t2) / t1 * 100
        comparison["achieved_time_reduction_pct"] = reduction
        comparison["meets_required_reduction"] = reduction >= REQUIRED_TIME_REDUCTION_PCT

    for fraction in fractions:
        h1 = _cell(hit_table, fraction, "config1_mean")
        h2 = _cell(hit_table, fraction, "config2_mean")
        if h1 is not None and h2 is not None:
            comparison["hit_ratio_gain_by_fraction"][repr(fraction)] = h2 - h1

    if half is not None:
        h2_half = _cell(hit_table, half, "config2_mean")
        h1_full = _cell(hit_table, largest, "config1_mean")
        t2_half = _cell(time_table, half, "config2_mean")
        if h2_half is not None and h1_full is not None:
            comparison["crossover"] = {
                "prefetch_fraction": half,
                "baseline_fraction": largest,
                "prefetch_hit_ratio": h2_half,
                "baseline_hit_ratio": h1_full,
                "holds": h2_half >= h1_full,
                "time_reduction_pct": (t1 - t2_half) / t1 * 100 if t1 and t2_half is not None else None,
            }
    return comparison


def write_report(experiment_csv: Union[str, Path], out_dir: Union[str, Path]) -> Dict[str, Path]:
    frame = load_experiment_table(experiment_csv)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    written: Dict[str, Path] = {}
    tables = {}
    for metric, filename in TABLES.items():
        table = aggregate(frame, metric)
        path = out_dir / filename
        table.to_csv(path, index=False, lineterminator="\n")
        tables[metric] = table
        written[metric] = path

    comparison = compare(tables["hit_ratio"], tables["retrieval_time_per_image_s"])
    path = out_dir / "comparison.json"
    path.write_text(json.dumps(comparison, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    written["comparison"] = path

    reduction = comparison["achieved_time_reduction_pct"]
    if reduction is not None:
        logger.info(f"Retrieval time reduction at {comparison['largest_cache_fraction']:.4%} cache: "
                    f"{reduction:.1f}% (reported {REPORTED_TIME_REDUCTION_PCT:.0f}%)")
    return written
