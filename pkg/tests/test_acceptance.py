"""Full-scale sweep on the standard workload; run with `pytest -m slow`"""

import os

import pytest

from config import Config
from handlers.report_handler import REQUIRED_TIME_REDUCTION_PCT, aggregate, compare
from simulation.experiment import run_experiment
from workload.generator import WorkloadGenerator

pytestmark = pytest.mark.slow


@pytest.fixture(scope="module")
def sweep():
    config = Config()
    workload = WorkloadGenerator(config.workload).generate()
    frame = run_experiment(
        workload.events, workload.index, config.experiment.cache_fractions, config.experiment.repetitions,
        config, workers=min(4, os.cpu_count() or 1),
    ).to_frame()
    workload.index.close()
    hits = aggregate(frame, "hit_ratio")
    times = aggregate(frame, "retrieval_time_per_image_s")
    return hits, times, compare(hits, times)


def test_prefetching_raises_the_hit_ratio_at_every_size(sweep):
    hits, _, _ = sweep
    assert len(hits) == 5
    for _, row in hits.iterrows():
        assert row["config2_mean"] > row["config1_mean"], row["cache_fraction"]


def test_retrieval_time_drops_at_the_largest_cache(sweep):
    _, _, comparison = sweep
    assert comparison["largest_cache_fraction"] == 0.05
    assert comparison["achieved_time_reduction_pct"] >= REQUIRED_TIME_REDUCTION_PCT


def test_prefetching_with_half_the_cache_matches_plain_lru(sweep):
    _, _, comparison = sweep
    crossover = comparison["crossover"]
    assert crossover["prefetch_fraction"] == 0.025
    assert crossover["holds"]
