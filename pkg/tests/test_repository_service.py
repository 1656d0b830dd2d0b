import pickle
from datetime import date

import pytest

from database.models import Modality, QuerySpec
from database.repository_service import RepositoryIndex
from errors import DuplicateStudy, StudyNotFound
from conftest import make_study


def test_lookup_and_totals(index, studies):
    assert len(index) == len(studies)
    assert index.total_bytes == sum(s.size_bytes for s in studies)
    assert index.lookup("A1").patient_id == "P1"
    assert "A1" in index and "ZZ" not in index
    assert index.get("ZZ") is None


def test_lookup_of_unknown_uid_raises(index):
    with pytest.raises(StudyNotFound) as excinfo:
        index.lookup("ZZ")
    assert excinfo.value.study_uid == "ZZ"


def test_duplicate_uid_is_rejected_and_index_unchanged(index):
    before = index.total_bytes
    with pytest.raises(DuplicateStudy):
        index.add(make_study("A1"))
    assert index.total_bytes == before
    assert index.check_consistency()


def test_query_orders_by_date_then_uid(index):
    result = index.query(QuerySpec(patient_id="P1"))
    assert [s.study_uid for s in result] == ["A3", "A2", "A1"]


def test_query_by_modality_and_range(index):
    spec = QuerySpec(modality="CT", study_date_range=(date(2016, 2, 1), date(2016, 2, 29)))
    assert [s.study_uid for s in index.query(spec)] == ["A1", "B1", "C1"]
    spec = QuerySpec(modality=Modality.CT, study_date_range=(date(2016, 2, 21), date(2016, 2, 26)))
    assert [s.study_uid for s in index.query(spec)] == ["B1"]


def test_query_as_of_hides_future_studies(index):
    spec = QuerySpec(institution="I02")
    assert [s.study_uid for s in index.query(spec)] == ["B1", "D1"]
    assert [s.study_uid for s in index.query(spec, as_of=date(2016, 2, 26))] == ["B1"]


def test_query_without_matches_is_empty(index):
    assert index.query(QuerySpec(patient_id="nobody")) == []


def test_institutions_sorted(index):
    assert index.institutions() == ["I01", "I02"]


def test_index_pickles_by_records(index):
    clone = pickle.loads(pickle.dumps(index))
    assert isinstance(clone, RepositoryIndex)
    assert clone.records() == index.records()
    assert [s.study_uid for s in clone.query(QuerySpec(patient_id="P2"))] == ["B1", "B2"]
    clone.close()
