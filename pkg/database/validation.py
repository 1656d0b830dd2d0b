#!/usr/bin/env python3
"""
Trace validation against a repository index
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Sequence

from .models import TraceEvent
from .repository_service import RepositoryIndex

logger = logging.getLogger(__name__)


class FindingKind(str, Enum):
    MISSING_STUDY = "missing_study"
    TIMESTAMP_INVERSION = "timestamp_inversion"
    MALFORMED_QUERY = "malformed_query"
    MALFORMED_EVENT = "malformed_event"
    STUDY_AFTER_EVENT = "study_after_event"


@dataclass(frozen=True)
class Finding:
    kind: FindingKind
    position: int
    detail: str

    def to_dict(self) -> Dict[str, object]:
        return {'kind': self.kind.value, 'position': self.position, 'detail': self.detail}


@dataclass
class ValidationReport:
    """Every problem found in a trace; empty for a valid trace"""

    findings: List[Finding] = field(default_factory=list)

    @property
    def is_valid(self) -> bool:
        return not self.findings

    def __len__(self) -> int:
        return len(self.findings)

    def of_kind(self, kind: FindingKind) -> List[Finding]:
        return [f for f in self.findings if f.kind is kind]

    def summary(self) -> str:
        counts: Dict[str, int] = {}
        for finding in self.findings:
            counts[finding.kind.value] = counts.get(finding.kind.value, 0) + 1
        return ", ".join(f"{kind}={n}" for kind, n in sorted(counts.items())) or "clean"


def validate_trace(events: Sequence[TraceEvent], index: RepositoryIndex) -> ValidationReport:
    """Report every broken reference, timestamp inversion and malformed query; never raises"""
    report = ValidationReport()
    previous_ts = None

    for position, event in enumerate(events):
        if previous_ts is not None and event.timestamp < previous_ts:
            report.findings.append(Finding(
                FindingKind.TIMESTAMP_INVERSION, position,
                f"timestamp {event.timestamp} precedes previous {previous_ts}",
            ))
        previous_ts = event.timestamp if previous_ts is None else max(previous_ts, event.timestamp)

        issues = event.problems()
        if issues:
            report.findings.append(Finding(FindingKind.MALFORMED_EVENT, position, "; ".join(issues)))
            continue

        if event.is_query:
            query_issues = event.query.problems()
            if query_issues:
                report.findings.append(Finding(FindingKind.MALFORMED_QUERY, position, "; ".join(query_issues)))
            continue

        study = index.get(event.study_uid)
        if study is None:
            report.findings.append(Finding(
                FindingKind.MISSING_STUDY, position, f"study {event.study_uid} not in index",
            ))
        elif study.study_date > event.event_date:
            report.findings.append(Finding(
                FindingKind.STUDY_AFTER_EVENT, position,
                f"study {event.study_uid} dated {study.study_date} retrieved on {event.event_date}",
            ))

    if report.findings:
        logger.warning(f"Trace validation found {len(report.findings)} problem(s): {report.summary()}")
    return report
