import json

import pandas as pd
import pytest

from errors import ReportError
from handlers.report_handler import (
    REQUIRED_TIME_REDUCTION_PCT, aggregate, compare, load_experiment_table, write_report,
)
from simulation.experiment import CSV_COLUMNS


def row(fraction, config, repetition, hit_ratio, seconds):
    return {
        "cache_fraction": fraction, "config": config, "repetition": repetition,
        "hit_ratio": hit_ratio, "retrieval_time_per_image_s": seconds,
        "bytes_prefetched": 0 if config == "config1" else 1000, "prefetch_precision": 0.0, "evictions": 1,
    }


@pytest.fixture
def experiment_csv(tmp_path):
    rows = []
    for r, (h1, h2) in enumerate([(0.20, 0.40), (0.30, 0.50), (0.25, 0.45)]):
        rows.append(row(0.05, "config1", r, h1, 10.0 + r))
        rows.append(row(0.05, "config2", r, h2, 6.0 + r))
        rows.append(row(0.025, "config1", r, h1 - 0.1, 12.0))
        rows.append(row(0.025, "config2", r, h2 - 0.1, 8.0))
    path = tmp_path / "experiment.csv"
    pd.DataFrame(rows, columns=CSV_COLUMNS).to_csv(path, index=False)
    return path


def test_missing_empty_and_foreign_tables_are_report_errors(tmp_path):
    with pytest.raises(ReportError):
        load_experiment_table(tmp_path / "absent.csv")

    empty = tmp_path / "empty.csv"
    empty.write_text("")
    with pytest.raises(ReportError):
        load_experiment_table(empty)

    header_only = tmp_path / "header.csv"
    header_only.write_text(",".join(CSV_COLUMNS) + "\n")
    with pytest.raises(ReportError, match="no rows"):
        load_experiment_table(header_only)

    foreign = tmp_path / "foreign.csv"
    foreign.write_text("a,b\n1,2\n")
    with pytest.raises(ReportError, match="lacks column"):
        load_experiment_table(foreign)


def test_aggregate_gives_mean_and_std_per_configuration(experiment_csv):
    table = aggregate(load_experiment_table(experiment_csv), "hit_ratio")
    assert list(table.columns) == ["cache_fraction", "config1_mean", "config1_std", "config2_mean", "config2_std"]
    assert list(table["cache_fraction"]) == [0.025, 0.05]
    largest = table.iloc[1]
    assert largest["config1_mean"] == pytest.approx(0.25)
    assert largest["config2_mean"] == pytest.approx(0.45)
    assert largest["config1_std"] == pytest.approx((0.05 ** 2 * 2 / 3) ** 0.5)


def test_comparison_against_the_reported_reduction(experiment_csv):
    frame = load_experiment_table(experiment_csv)
    result = compare(aggregate(frame, "hit_ratio"), aggregate(frame, "retrieval_time_per_image_s"))
    assert result["largest_cache_fraction"] == 0.05
    # config1 averages 11 s and config2 7 s at the largest cache
    assert result["achieved_time_reduction_pct"] == pytest.approx(400 / 11)
    assert result["meets_required_reduction"] is (400 / 11 >= REQUIRED_TIME_REDUCTION_PCT)
    assert result["hit_ratio_gain_by_fraction"] == {
        "0.025": pytest.approx(0.2), "0.05": pytest.approx(0.2),
    }
    crossover = result["crossover"]
    assert crossover["prefetch_fraction"] == 0.025 and crossover["baseline_fraction"] == 0.05
    assert crossover["holds"] is True
    assert crossover["time_reduction_pct"] == pytest.approx(300 / 11)


def test_single_configuration_has_no_comparison(tmp_path):
    path = tmp_path / "experiment.csv"
    pd.DataFrame([row(0.05, "config1", 0, 0.3, 9.0)], columns=CSV_COLUMNS).to_csv(path, index=False)
    frame = load_experiment_table(path)
    result = compare(aggregate(frame, "hit_ratio"), aggregate(frame, "retrieval_time_per_image_s"))
    assert result["achieved_time_reduction_pct"] is None
    assert result["hit_ratio_gain_by_fraction"] == {}
    assert result["crossover"] is None


def test_write_report_files(experiment_csv, tmp_path):
    written = write_report(experiment_csv, tmp_path / "report")
    assert sorted(p.name for p in written.values()) == ["comparison.json", "hit_ratio.csv", "retrieval_time.csv"]
    hit_lines = written["hit_ratio"].read_text().splitlines()
    assert hit_lines[0] == "cache_fraction,config1_mean,config1_std,config2_mean,config2_std"
    assert len(hit_lines) == 3
    comparison = json.loads(written["comparison"].read_text())
    assert comparison["crossover"]["holds"] is True
