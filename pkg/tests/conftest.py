"""Shared fixtures: a small hand-built repository, tiny workloads and traces"""

from collections import OrderedDict
from datetime import date

import pytest

from config import MB, Config, WorkloadConfig
from database.models import EventKind, QuerySpec, StudyRecord, TraceEvent, date_to_timestamp
from database.repository_service import RepositoryIndex

DAY0 = date(2016, 3, 1)
T0 = date_to_timestamp(DAY0) + 9 * 3600


def make_study(uid, patient="P1", modality="CT", study_date=date(2016, 2, 1), size=MB,
               institution="I01", body_part="CHEST", sex="F", birth=date(1960, 5, 17), images=10):
    return StudyRecord(
        study_uid=uid, patient_id=patient, patient_sex=sex, patient_birth_date=birth,
        modality=modality, body_part=body_part, institution=institution,
        study_date=study_date, size_bytes=size, num_images=images,
    )


def query(ts, ae="WS1", qid=None, **spec):
    return TraceEvent(timestamp=ts, aetitle=ae, kind=EventKind.QUERY, query=QuerySpec(**spec), query_id=qid)


def retrieve(ts, uid, ae="WS1", qid=None):
    return TraceEvent(timestamp=ts, aetitle=ae, kind=EventKind.RETRIEVE, study_uid=uid, query_id=qid)


@pytest.fixture
def studies():
    return [
        make_study("A1", patient="P1", modality="CT", study_date=date(2016, 2, 20)),
        make_study("A2", patient="P1", modality="MR", study_date=date(2015, 11, 3), body_part="HEAD"),
        make_study("A3", patient="P1", modality="CT", study_date=date(2014, 6, 9)),
        make_study("B1", patient="P2", modality="CT", study_date=date(2016, 2, 25), institution="I02"),
        make_study("B2", patient="P2", modality="US", study_date=date(2016, 2, 27), body_part="ABDOMEN"),
        make_study("C1", patient="P3", modality="CT", study_date=date(2016, 2, 28), sex="M"),
        make_study("C2", patient="P3", modality="CR", study_date=date(2016, 1, 15), sex="M"),
        make_study("D1", patient="P4", modality="MR", study_date=date(2016, 2, 29), institution="I02"),
    ]


@pytest.fixture
def index(studies):
    repo = RepositoryIndex(studies)
    yield repo
    repo.close()


@pytest.fixture
def tiny_workload():
    return WorkloadConfig(
        duration_days=6, n_studies=150, total_repo_bytes=2_000 * MB, n_workstations=2,
        session_rate_per_day=8.0, seed=11, n_institutions=2, history_days=400,
    )


@pytest.fixture
def tiny_config(tmp_path, monkeypatch, tiny_workload):
    monkeypatch.chdir(tmp_path)
    monkeypatch.delenv("LOG_LEVEL", raising=False)
    monkeypatch.delenv("DEBUG", raising=False)
    cfg = Config(overrides={"experiment.repetitions": 2, "experiment.cache_fractions": "0.02,0.05"})
    cfg.workload = tiny_workload
    return cfg


class ReferenceLru:
    """Textbook LRU list with the same watermark rule"""

    def __init__(self, capacity, high=0.95, low=0.85):
        self.capacity, self.high, self.low = capacity, high * capacity, low * capacity
        self.items = OrderedDict()

    def used(self):
        return sum(self.items.values())

    def access(self, uid):
        if uid in self.items:
            self.items.move_to_end(uid)
            return True
        return False

    def insert(self, uid, size):
        if uid in self.items or size > self.capacity:
            return []
        needs_room = self.used() + size > self.high
        self.items[uid] = size
        victims = []
        if needs_room:
            for victim in list(self.items)[:-1]:
                if self.used() <= self.low:
                    break
                del self.items[victim]
                victims.append(victim)
        return victims
