import sqlite3
from datetime import date

import numpy as np
import pytest

from cache.study_cache import StudyCache
from config import MB, NetworkModel, PrefetchSettings, SimConfig
from database.models import SECONDS_PER_DAY, UsagePattern, date_to_timestamp
from database.repository_service import RepositoryIndex
from errors import ValidationFailed
from prefetch.scorer import train_scorer
from simulation.engine import GatewaySimulator, RunArtifacts, run_simulation
from workload.generator import WorkloadGenerator
from conftest import DAY0, T0, ReferenceLru, make_study, query, retrieve

NET = NetworkModel()


def baseline(capacity):
    return SimConfig(cache_capacity_bytes=capacity, prefetch_enabled=False)


def static(capacity):
    return SimConfig(cache_capacity_bytes=capacity, prefetch_enabled=False, static_rules=True)


def test_replay_matches_reference_lru_without_prefetch():
    for seed in range(100):
        rng = np.random.default_rng(seed)
        n_studies = int(rng.integers(5, 60))
        sizes = {f"S{i:03d}": int(rng.integers(1, 6)) * MB for i in range(n_studies)}
        uids = sorted(sizes)
        repo = RepositoryIndex([make_study(u, patient=f"P{i % 7}", size=sizes[u]) for i, u in enumerate(uids)])
        picks = [uids[int(rng.integers(n_studies))] for _ in range(int(rng.integers(1, 501)))]
        # ten seconds apart: every miss is admitted before the next request
        trace = [retrieve(T0 + 10 * i, uid) for i, uid in enumerate(picks)]
        capacity = int(rng.integers(2, 20)) * MB

        reference = ReferenceLru(capacity)
        expected, victims = [], 0
        for uid in picks:
            hit = reference.access(uid)
            if not hit:
                victims += len(reference.insert(uid, sizes[uid]))
            expected.append(hit)

        sim = GatewaySimulator(trace, repo, baseline(capacity))
        report = sim.run()
        assert report.outcomes == expected, f"seed {seed}"
        assert report.evictions == victims
        assert sim.cache.eviction_order() == list(reference.items)
        repo.close()


def test_hit_costs_lan_time_and_miss_costs_wan_time(index):
    trace = [retrieve(T0, "A1"), retrieve(T0 + 60, "A1"), retrieve(T0 + 120, "B1")]
    report = run_simulation(trace, index, baseline(100 * MB))
    assert report.outcomes == [False, True, False]
    assert report.hit_ratio == pytest.approx(1 / 3)
    assert report.total_retrieval_time_s == pytest.approx(2 * NET.wan_time(MB) + NET.lan_time(MB))
    assert report.retrieval_time_per_image_s == pytest.approx(report.total_retrieval_time_s / 3)
    assert [d.requests for d in report.per_day] == [3]
    assert report.bytes_prefetched == 0 and report.classifier_accuracy is None


def test_zero_capacity_misses_everything(index):
    trace = [retrieve(T0, "A1"), retrieve(T0 + 60, "A1")]
    report = run_simulation(trace, index, baseline(0))
    assert report.outcomes == [False, False]


def test_static_rules_prefetch_the_patient(index):
    trace = [query(T0, qid=0, patient_id="P1"), retrieve(T0 + 60, "A1", qid=0)]
    report = run_simulation(trace, index, static(100 * MB))
    assert report.config == "static"
    assert report.outcomes == [True]
    assert report.prefetched_studies == 3
    assert report.bytes_prefetched == 3 * MB
    assert report.prefetch_hits == 1
    assert report.prefetch_precision == pytest.approx(1 / 3)


def test_learned_prefetch_serves_query_results(index):
    cfg = SimConfig(cache_capacity_bytes=100 * MB, prefetch=PrefetchSettings(score_floor=0.0))
    trace = [query(T0, qid=0, patient_id="P1"), retrieve(T0 + 60, "A1", qid=0)]
    report = run_simulation(trace, index, cfg)
    assert report.config == "config2"
    assert report.outcomes == [True]
    assert report.prefetch_hits == 1
    assert report.sessions == 1
    assert report.classifier_accuracy in (0.0, 1.0)


def test_demand_cancels_a_queued_prefetch(index):
    trace = [query(T0, qid=0, patient_id="P1"), retrieve(T0, "A3", qid=0)]
    sim = GatewaySimulator(trace, index, static(100 * MB))
    report = sim.run()
    # A1 was already on the wire; the demand overtakes A2
    assert report.outcomes == [False]
    assert report.total_retrieval_time_s == pytest.approx(2 * NET.wan_time(MB))
    assert sim.link.cancelled == 1
    assert report.prefetched_studies == 2
    assert report.prefetch_hits == 0
    assert "A3" in sim.cache


def test_demand_waits_for_a_prefetch_already_on_the_wire():
    repo = RepositoryIndex([
        make_study("BIG", size=50 * MB, study_date=date(2016, 2, 20)),
        make_study("OLD", size=MB, study_date=date(2015, 1, 5)),
    ])
    trace = [query(T0, qid=0, patient_id="P1"), retrieve(T0 + 1, "BIG", qid=0)]
    sim = GatewaySimulator(trace, repo, static(1000 * MB))
    report = sim.run()
    assert report.outcomes == [False]
    assert report.total_retrieval_time_s == pytest.approx(NET.wan_time(50 * MB) - 1)
    assert sim.link.cancelled == 0
    assert report.prefetch_hits == 1
    repo.close()


def test_every_retrieve_is_counted_once(tiny_workload, monkeypatch):
    consistent = []
    close = StudyCache.close

    def check_then_close(cache):
        consistent.append(cache.check_consistency())
        close(cache)

    monkeypatch.setattr(StudyCache, "close", check_then_close)
    workload = WorkloadGenerator(tiny_workload).generate()
    capacity = int(0.05 * workload.index.total_bytes)
    sim = GatewaySimulator(workload.events, workload.index, SimConfig(cache_capacity_bytes=capacity, seed=3))
    report = sim.run()

    assert report.total_requests == workload.retrieve_count
    assert len(report.outcomes) == workload.retrieve_count
    assert report.hits + report.misses == report.total_requests
    assert sum(d.requests for d in report.per_day) == report.total_requests
    assert report.sessions == workload.query_count
    assert 0.0 <= report.prefetch_precision <= 1.0
    assert sim.cache.used_bytes <= capacity
    assert consistent == [True]
    workload.index.close()


def test_same_seed_same_report(tiny_workload):
    workload = WorkloadGenerator(tiny_workload).generate()
    capacity = int(0.02 * workload.index.total_bytes)
    first = run_simulation(workload.events, workload.index, SimConfig(cache_capacity_bytes=capacity, seed=9))
    second = run_simulation(workload.events, workload.index, SimConfig(cache_capacity_bytes=capacity, seed=9))
    assert first.to_dict() == second.to_dict()
    assert first.outcomes == second.outcomes
    workload.index.close()


def test_invalid_trace_is_refused(index):
    trace = [retrieve(T0, "NOPE"), retrieve(T0 - 5, "A1")]
    with pytest.raises(ValidationFailed) as excinfo:
        run_simulation(trace, index, baseline(100 * MB))
    assert len(excinfo.value.report) == 2


def test_run_artifacts(index, tmp_path):
    artifacts = RunArtifacts(
        message_log=tmp_path / "messages.jsonl",
        training_log=tmp_path / "training_log.jsonl",
        cache_dump=tmp_path / "cache_state.jsonl",
        checkpoint_dir=tmp_path / "checkpoints",
    )
    cfg = SimConfig(cache_capacity_bytes=100 * MB, prefetch=PrefetchSettings(score_floor=0.0))
    trace = [query(T0, qid=0, patient_id="P1"), retrieve(T0 + 60, "A1", qid=0)]
    GatewaySimulator(trace, index, cfg, artifacts).run()

    assert len(artifacts.message_log.read_text().splitlines()) == 2
    assert len(artifacts.training_log.read_text().splitlines()) == 1
    assert artifacts.cache_dump.read_text().count("study_uid") >= 1
    saved = sorted(p.name for p in artifacts.checkpoint_dir.iterdir())
    assert "classifier.json" in saved
    assert "scorer_WS1.json" in saved


def test_cache_is_released_when_the_run_ends(index):
    sim = GatewaySimulator([retrieve(T0, "A1")], index, baseline(100 * MB))
    sim.run()
    with pytest.raises(sqlite3.ProgrammingError):
        sim.cache.index_service.conn.execute("SELECT 1")


def test_session_open_at_midnight_is_labelled_with_its_later_retrieves(index, monkeypatch):
    seen = []

    def recording_train_scorer(bank, sessions, labels, day_retrieves, repo):
        seen.append(([s.query_id for s in sessions], sorted(e.study_uid for e in day_retrieves)))
        return train_scorer(bank, sessions, labels, day_retrieves, repo)

    monkeypatch.setattr("simulation.engine.train_scorer", recording_train_scorer)
    midnight = date_to_timestamp(DAY0) + SECONDS_PER_DAY
    trace = [
        query(midnight - 600, qid=0, patient_id="P1"),
        retrieve(midnight - 300, "A3", qid=0),
        retrieve(midnight, "A1", qid=0),
        retrieve(midnight + 300, "A2", qid=0),
    ]
    sim = GatewaySimulator(trace, index, SimConfig(cache_capacity_bytes=100 * MB))
    report = sim.run()

    assert sim.recognizer.labelled[0] is UsagePattern.PATIENT_REVISING
    assert report.sessions == 1
    assert seen == [([0], ["A1", "A2", "A3"])]


@pytest.mark.parametrize("prefetch_enabled", [False, True])
def test_cache_holding_the_whole_repository_hits_every_second_request(tiny_workload, prefetch_enabled):
    workload = WorkloadGenerator(tiny_workload).generate()
    records = workload.index.records()
    start = date_to_timestamp(max(s.study_date for s in records)) + SECONDS_PER_DAY
    gap = int(NET.wan_time(max(s.size_bytes for s in records))) + 60
    uids = [s.study_uid for s in records] * 2
    trace = [retrieve(start + gap * i, uid) for i, uid in enumerate(uids)]
    cfg = SimConfig(cache_capacity_bytes=2 * workload.index.total_bytes, prefetch_enabled=prefetch_enabled)

    report = run_simulation(trace, workload.index, cfg)
    assert report.total_requests == 2 * len(records)
    assert report.hit_ratio >= 0.5
    if not prefetch_enabled:
        assert report.outcomes == [False] * len(records) + [True] * len(records)
    workload.index.close()


def test_plain_lru_hit_ratio_grows_with_cache_size(tiny_workload):
    workload = WorkloadGenerator(tiny_workload).generate()
    total = workload.index.total_bytes
    ratios = [run_simulation(workload.events, workload.index, baseline(int(f * total))).hit_ratio
              for f in (0.02, 0.1, 0.5, 2.0)]
    assert ratios == sorted(ratios)
    workload.index.close()
