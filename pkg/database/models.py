#!/usr/bin/env python3
"""
Domain models for the imaging gateway: studies, trace events, queries and
usage patterns, plus the sqlite helpers behind the repository and cache
metadata indexes.

All domain values are immutable after construction.
"""

import logging
import sqlite3
from dataclasses import dataclass
from datetime import date, datetime, timezone
from enum import Enum, IntEnum
from typing import Any, Dict, List, Optional, Tuple

logger = logging.getLogger(__name__)

SECONDS_PER_DAY = 86400


class OpenTokenEnum(str, Enum):
    """
    Closed vocabulary with an escape variant.

    Unknown tokens become pseudo-members named OTHER that keep their original
    token, so vendor-specific values never abort ingestion.
    """

    @classmethod
    def _missing_(cls, value):
        if not isinstance(value, str) or not value.strip():
            return None
        token = value.strip().upper()
        known = cls._value2member_map_.get(token)
        if known is not None:
            return known
        member = str.__new__(cls, token)
        member._name_ = "OTHER"
        member._value_ = token
        cls._value2member_map_[token] = member
        return member

    @property
    def is_other(self) -> bool:
        return self._name_ == "OTHER"

    @classmethod
    def known(cls) -> List["OpenTokenEnum"]:
        return list(cls.__members__.values())


class Modality(OpenTokenEnum):
    CT = "CT"
    MR = "MR"
    US = "US"
    CR = "CR"
    XA = "XA"
    DX = "DX"
    MG = "MG"
    NM = "NM"
    PT = "PT"


class BodyPart(OpenTokenEnum):
    HEAD = "HEAD"
    CHEST = "CHEST"
    ABDOMEN = "ABDOMEN"
    PELVIS = "PELVIS"
    SPINE = "SPINE"
    EXTREMITY = "EXTREMITY"
    BREAST = "BREAST"
    HEART = "HEART"


class PatientSex(str, Enum):
    M = "M"
    F = "F"
    O = "O"  # noqa: E741


class EventKind(str, Enum):
    """Query is a C-Find-like request, Retrieve a C-Move-like one"""

    QUERY = "find"
    RETRIEVE = "move"


class UsagePattern(IntEnum):
    PATIENT_REVISING = 1
    MODALITY_REVISING = 2
    INCONSEQUENT_QUERY = 3
    OTHER = 4


def to_date(timestamp: int) -> date:
    """Calendar date (timezone-free, UTC) of a trace timestamp"""
    return datetime.fromtimestamp(timestamp, tz=timezone.utc).date()


def day_index(timestamp: int) -> int:
    return timestamp // SECONDS_PER_DAY


def day_start(timestamp: int) -> int:
    return timestamp - timestamp % SECONDS_PER_DAY


def date_to_timestamp(d: date) -> int:
    return int(datetime(d.year, d.month, d.day, tzinfo=timezone.utc).timestamp())


def age_in_years(birth_date: date, on: date) -> int:
    """Whole years between birth_date and on (floor)"""
    years = on.year - birth_date.year
    if (on.month, on.day) < (birth_date.month, birth_date.day):
        years -= 1
    return years


@dataclass(frozen=True)
class StudyRecord:
    """Metadata of one imaging study, the unit of caching and prefetching"""

    study_uid: str
    patient_id: str
    patient_sex: PatientSex
    patient_birth_date: date
    modality: Modality
    body_part: BodyPart
    institution: str
    study_date: date
    size_bytes: int
    num_images: int

    def __post_init__(self):
        if not self.study_uid:
            raise ValueError("study_uid must not be empty")
        if isinstance(self.size_bytes, bool) or not isinstance(self.size_bytes, int) or self.size_bytes <= 0:
            raise ValueError(f"size_bytes must be a positive integer, got {self.size_bytes!r}")
        if isinstance(self.num_images, bool) or not isinstance(self.num_images, int) or self.num_images < 1:
            raise ValueError(f"num_images must be >= 1, got {self.num_images!r}")
        # Coerce tokens so callers may pass plain strings
        object.__setattr__(self, "patient_sex", PatientSex(self.patient_sex))
        object.__setattr__(self, "modality", Modality(self.modality))
        object.__setattr__(self, "body_part", BodyPart(self.body_part))

    def patient_age_at(self, timestamp: int) -> int:
        """Patient age at event time, never stored"""
        return age_in_years(self.patient_birth_date, to_date(timestamp))

    def to_dict(self) -> Dict[str, Any]:
        """Convert study to dictionary"""
        return {
            'study_uid': self.study_uid,
            'patient_id': self.patient_id,
            'patient_sex': self.patient_sex.value,
            'patient_birth_date': self.patient_birth_date.isoformat(),
            'modality': self.modality.value,
            'body_part': self.body_part.value,
            'institution': self.institution,
            'study_date': self.study_date.isoformat(),
            'size_bytes': self.size_bytes,
            'num_images': self.num_images,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'StudyRecord':
        """Create study from dictionary"""
        return cls(
            study_uid=str(data['study_uid']),
            patient_id=str(data['patient_id']),
            patient_sex=PatientSex(data['patient_sex']),
            patient_birth_date=date.fromisoformat(data['patient_birth_date']),
            modality=Modality(data['modality']),
            body_part=BodyPart(data['body_part']),
            institution=str(data['institution']),
            study_date=date.fromisoformat(data['study_date']),
            size_bytes=data['size_bytes'],
            num_images=data['num_images'],
        )


QUERY_KEYS = ("patient_id", "modality", "study_date_range", "body_part", "institution")


@dataclass(frozen=True)
class QuerySpec:
    """Parameters embedded in a query; any non-empty subset of QUERY_KEYS"""

    patient_id: Optional[str] = None
    modality: Optional[Modality] = None
    study_date_range: Optional[Tuple[date, date]] = None
    body_part: Optional[BodyPart] = None
    institution: Optional[str] = None

    def __post_init__(self):
        if self.modality is not None:
            object.__setattr__(self, "modality", Modality(self.modality))
        if self.body_part is not None:
            object.__setattr__(self, "body_part", BodyPart(self.body_part))
        if self.study_date_range is not None:
            object.__setattr__(self, "study_date_range", tuple(self.study_date_range))

    def present_keys(self) -> Tuple[str, ...]:
        return tuple(k for k in QUERY_KEYS if getattr(self, k) is not None)

    def problems(self) -> List[str]:
        """Reasons this query is malformed (empty list when valid)"""
        issues = []
        if not self.present_keys():
            issues.append("empty query")
        if self.study_date_range is not None:
            if len(self.study_date_range) != 2:
                issues.append("study_date_range needs exactly two dates")
            elif self.study_date_range[0] > self.study_date_range[1]:
                issues.append(f"study_date_range start {self.study_date_range[0]} after end {self.study_date_range[1]}")
        return issues

    def matches(self, study: StudyRecord) -> bool:
        if self.patient_id is not None and study.patient_id != self.patient_id:
            return False
        if self.modality is not None and study.modality != self.modality:
            return False
        if self.body_part is not None and study.body_part != self.body_part:
            return False
        if self.institution is not None and study.institution != self.institution:
            return False
        if self.study_date_range is not None:
            start, end = self.study_date_range
            if not start <= study.study_date <= end:
                return False
        return True

    def to_dict(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {}
        if self.patient_id is not None:
            data['patient_id'] = self.patient_id
        if self.modality is not None:
            data['modality'] = self.modality.value
        if self.study_date_range is not None:
            data['study_date_range'] = [d.isoformat() for d in self.study_date_range]
        if self.body_part is not None:
            data['body_part'] = self.body_part.value
        if self.institution is not None:
            data['institution'] = self.institution
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'QuerySpec':
        unknown = set(data) - set(QUERY_KEYS)
        if unknown:
            raise ValueError(f"unknown query key(s): {', '.join(sorted(unknown))}")
        date_range = data.get('study_date_range')
        spec = cls(
            patient_id=data.get('patient_id'),
            modality=Modality(data['modality']) if data.get('modality') is not None else None,
            study_date_range=tuple(date.fromisoformat(d) for d in date_range) if date_range is not None else None,
            body_part=BodyPart(data['body_part']) if data.get('body_part') is not None else None,
            institution=data.get('institution'),
        )
        issues = spec.problems()
        if issues:
            raise ValueError("; ".join(issues))
        return spec


@dataclass(frozen=True)
class TraceEvent:
    """One timestamped Query or Retrieve request from a named node"""

    timestamp: int
    aetitle: str
    kind: EventKind
    query: Optional[QuerySpec] = None
    study_uid: Optional[str] = None
    query_id: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "kind", EventKind(self.kind))

    @property
    def is_query(self) -> bool:
        return self.kind is EventKind.QUERY

    @property
    def is_retrieve(self) -> bool:
        return self.kind is EventKind.RETRIEVE

    @property
    def event_date(self) -> date:
        return to_date(self.timestamp)

    def problems(self) -> List[str]:
        issues = []
        if self.is_query:
            if self.query is None:
                issues.append("query event without query")
            if self.study_uid is not None:
                issues.append("query event carries a study uid")
        else:
            if not self.study_uid:
                issues.append("retrieve event without study uid")
            if self.query is not None:
                issues.append("retrieve event carries a query")
        return issues

    def to_dict(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {'ts': self.timestamp, 'ae': self.aetitle, 'kind': self.kind.value}
        if self.is_query:
            data['q'] = self.query.to_dict() if self.query is not None else {}
        else:
            data['uid'] = self.study_uid
        if self.query_id is not None:
            data['qid'] = self.query_id
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'TraceEvent':
        timestamp = data['ts']
        if isinstance(timestamp, bool) or not isinstance(timestamp, int):
            raise ValueError(f"ts must be integer seconds, got {timestamp!r}")
        kind = EventKind(data['kind'])
        query_id = data.get('qid')
        if query_id is not None and (isinstance(query_id, bool) or not isinstance(query_id, int)):
            raise ValueError(f"qid must be an integer, got {query_id!r}")
        event = cls(
            timestamp=timestamp,
            aetitle=str(data['ae']),
            kind=kind,
            query=QuerySpec.from_dict(data['q']) if kind is EventKind.QUERY else None,
            study_uid=str(data['uid']) if kind is EventKind.RETRIEVE else None,
            query_id=query_id,
        )
        issues = event.problems()
        if issues:
            raise ValueError("; ".join(issues))
        return event


@dataclass(frozen=True)
class SessionLabel:
    """Ground-truth usage class the generator used for one query"""

    query_id: int
    pattern: UsagePattern

    def to_dict(self) -> Dict[str, Any]:
        return {'qid': self.query_id, 'class': int(self.pattern)}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'SessionLabel':
        return cls(query_id=int(data['qid']), pattern=UsagePattern(int(data['class'])))


def get_db_connection(db_path: str = ":memory:") -> sqlite3.Connection:
    """Get database connection"""
    conn = sqlite3.connect(db_path, check_same_thread=False, isolation_level=None)
    conn.row_factory = sqlite3.Row
    return conn


def init_db(conn: sqlite3.Connection) -> None:
    """Initialize the repository and cache metadata tables"""
    cursor = conn.cursor()

    cursor.execute('''
        CREATE TABLE IF NOT EXISTS studies (
            study_uid TEXT PRIMARY KEY,
            patient_id TEXT NOT NULL,
            patient_sex TEXT NOT NULL,
            patient_birth_date TEXT NOT NULL,
            modality TEXT NOT NULL,
            body_part TEXT NOT NULL,
            institution TEXT NOT NULL,
            study_date TEXT NOT NULL,
            size_bytes INTEGER NOT NULL CHECK(size_bytes > 0),
            num_images INTEGER NOT NULL CHECK(num_images >= 1)
        )
    ''')
    cursor.execute('CREATE INDEX IF NOT EXISTS idx_studies_patient ON studies(patient_id, study_date)')
    cursor.execute('CREATE INDEX IF NOT EXISTS idx_studies_modality ON studies(modality, study_date)')
    cursor.execute('CREATE INDEX IF NOT EXISTS idx_studies_institution ON studies(institution, study_date)')

    cursor.execute('''
        CREATE TABLE IF NOT EXISTS cache_entries (
            study_uid TEXT PRIMARY KEY,
            size_bytes INTEGER NOT NULL,
            inserted_at REAL NOT NULL,
            last_access_at REAL NOT NULL,
            access_seq INTEGER NOT NULL,
            origin TEXT NOT NULL CHECK(origin IN ('passive', 'short_term', 'long_term'))
        )
    ''')
    logger.debug("Database initialized")
