import pytest

from database.models import SessionLabel, UsagePattern
from errors import TraceParseError
from workload.trace_io import read_index, read_labels, read_trace, write_index, write_labels, write_trace
from conftest import T0, query, retrieve


def test_trace_file_roundtrip(tmp_path):
    events = [query(T0, qid=0, patient_id="P1"), retrieve(T0 + 30, "A1", qid=0)]
    path = tmp_path / "trace.jsonl"
    assert write_trace(events, path) == 2
    assert read_trace(path) == events


def test_index_file_is_sorted_by_uid(tmp_path, index):
    path = tmp_path / "index.jsonl"
    write_index(index, path)
    uids = [line.split('"study_uid":"')[1].split('"')[0] for line in path.read_text().splitlines()]
    assert uids == sorted(uids)
    assert read_index(path).records() == index.records()


def test_labels_file(tmp_path):
    labels = [SessionLabel(0, UsagePattern.PATIENT_REVISING), SessionLabel(1, UsagePattern.OTHER)]
    path = tmp_path / "labels.jsonl"
    write_labels(labels, path)
    assert read_labels(path) == labels


def test_parse_error_carries_line_number(tmp_path):
    path = tmp_path / "trace.jsonl"
    path.write_text('{"ts": 1, "ae": "WS1", "kind": "move", "uid": "A1"}\n\n{"ts": 2, "ae": "WS1"\n')
    with pytest.raises(TraceParseError) as excinfo:
        read_trace(path)
    assert excinfo.value.line == 3


def test_missing_field_is_named(tmp_path):
    path = tmp_path / "trace.jsonl"
    path.write_text('{"ts": 1, "kind": "move", "uid": "A1"}\n')
    with pytest.raises(TraceParseError, match="'ae'"):
        read_trace(path)
