#!/usr/bin/env python3
"""
Trace, repository index and ground-truth label files (JSON Lines)
"""

import logging
from pathlib import Path
from typing import Iterable, List, Sequence, Union

from database.models import SessionLabel, StudyRecord, TraceEvent
from database.repository_service import RepositoryIndex
from utils.jsonl import read_lines, write_lines

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def read_trace(path: PathLike) -> List[TraceEvent]:
    events = read_lines(path, TraceEvent.from_dict)
    logger.debug(f"Read {len(events)} events from {path}")
    return events


def write_trace(events: Iterable[TraceEvent], path: PathLike) -> int:
    count = write_lines(path, (event.to_dict() for event in events))
    logger.debug(f"Wrote {count} events to {path}")
    return count


def read_index(path: PathLike) -> RepositoryIndex:
    records = read_lines(path, StudyRecord.from_dict)
    index = RepositoryIndex(records)
    logger.debug(f"Read {len(index)} studies ({index.total_bytes} bytes) from {path}")
    return index


def write_index(index: Union[RepositoryIndex, Sequence[StudyRecord]], path: PathLike) -> int:
    """Write studies sorted by uid so equal indexes give identical files"""
    records = index.records() if isinstance(index, RepositoryIndex) else sorted(index, key=lambda r: r.study_uid)
    return write_lines(path, (record.to_dict() for record in records))


def read_labels(path: PathLike) -> List[SessionLabel]:
    return read_lines(path, SessionLabel.from_dict)


def write_labels(labels: Iterable[SessionLabel], path: PathLike) -> int:
    return write_lines(path, (label.to_dict() for label in labels))
