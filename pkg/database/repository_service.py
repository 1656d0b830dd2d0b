#!/usr/bin/env python3
"""
Repository index service: the study metadata of the remote archive
"""

import logging
from datetime import date
from typing import Dict, Iterable, Iterator, List, Optional, Tuple

from errors import DuplicateStudy, StudyNotFound
from .models import QuerySpec, StudyRecord, get_db_connection, init_db

logger = logging.getLogger(__name__)


class RepositoryIndex:
    """
    Map study_uid -> StudyRecord with sub-set queries.

    Records are kept in memory for exact lookups; an sqlite table mirrors them
    so patient / modality / institution / date-range queries are answered by
    the database, the way the archive answers a C-Find.
    """

    def __init__(self, records: Iterable[StudyRecord] = (), db_path: str = ":memory:"):
        self.db_path = db_path
        self.conn = get_db_connection(db_path)
        init_db(self.conn)
        self._records: Dict[str, StudyRecord] = {}
        self._total_bytes = 0
        self.add_many(records)

    def __reduce__(self):
        # sqlite connections do not pickle; rebuild from the records
        return (RepositoryIndex, (list(self._records.values()),))

    def add(self, record: StudyRecord) -> None:
        """Add one study; uids are unique within an index"""
        self.add_many([record])

    def add_many(self, records: Iterable[StudyRecord]) -> int:
        """Add studies in one transaction and return how many were added"""
        batch = []
        for record in records:
            if record.study_uid in self._records:
                raise DuplicateStudy(record.study_uid)
            self._records[record.study_uid] = record
            self._total_bytes += record.size_bytes
            batch.append(record)
        if not batch:
            return 0

        cursor = self.conn.cursor()
        try:
            cursor.execute('BEGIN')
            cursor.executemany('''
                INSERT INTO studies
                (study_uid, patient_id, patient_sex, patient_birth_date, modality,
                 body_part, institution, study_date, size_bytes, num_images)
                VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?, ?)
            ''', [self._row(r) for r in batch])
            cursor.execute('COMMIT')
        except Exception as e:
            cursor.execute('ROLLBACK')
            for record in batch:
                del self._records[record.study_uid]
                self._total_bytes -= record.size_bytes
            logger.error(f"Error adding studies to repository index: {e}")
            raise
        return len(batch)

    @staticmethod
    def _row(record: StudyRecord) -> Tuple:
        return (
            record.study_uid,
            record.patient_id,
            record.patient_sex.value,
            record.patient_birth_date.isoformat(),
            record.modality.value,
            record.body_part.value,
            record.institution,
            record.study_date.isoformat(),
            record.size_bytes,
            record.num_images,
        )

    @property
    def total_bytes(self) -> int:
        return self._total_bytes

    def get(self, study_uid: str) -> Optional[StudyRecord]:
        return self._records.get(study_uid)

    def lookup(self, study_uid: str) -> StudyRecord:
        """Exact lookup; absent uid raises StudyNotFound"""
        record = self._records.get(study_uid)
        if record is None:
            raise StudyNotFound(study_uid)
        return record

    def __contains__(self, study_uid: object) -> bool:
        return study_uid in self._records

    def __len__(self) -> int:
        return len(self._records)

    def __iter__(self) -> Iterator[StudyRecord]:
        return iter(self._records.values())

    def records(self) -> List[StudyRecord]:
        """All records sorted by uid"""
        return [self._records[uid] for uid in sorted(self._records)]

    def query(self, spec: QuerySpec, as_of: Optional[date] = None) -> List[StudyRecord]:
        """
        Studies matching the query, ordered by (study_date, study_uid).

        When as_of is given, studies produced after that date are not yet in
        the archive and are excluded.
        """
        clauses = []
        params: List[object] = []
        if spec.patient_id is not None:
            clauses.append('patient_id = ?')
            params.append(spec.patient_id)
        if spec.modality is not None:
            clauses.append('modality = ?')
            params.append(spec.modality.value)
        if spec.body_part is not None:
            clauses.append('body_part = ?')
            params.append(spec.body_part.value)
        if spec.institution is not None:
            clauses.append('institution = ?')
            params.append(spec.institution)
        if spec.study_date_range is not None:
            clauses.append('study_date BETWEEN ? AND ?')
            params.extend(d.isoformat() for d in spec.study_date_range)
        if as_of is not None:
            clauses.append('study_date <= ?')
            params.append(as_of.isoformat())

        sql = 'SELECT study_uid FROM studies'
        if clauses:
            sql += ' WHERE ' + ' AND '.join(clauses)
        sql += ' ORDER BY study_date, study_uid'

        cursor = self.conn.cursor()
        cursor.execute(sql, params)
        return [self._records[row['study_uid']] for row in cursor.fetchall()]

    def institutions(self) -> List[str]:
        cursor = self.conn.cursor()
        cursor.execute('SELECT DISTINCT institution FROM studies ORDER BY institution')
        return [row['institution'] for row in cursor.fetchall()]

    def check_consistency(self) -> bool:
        """The sqlite mirror holds exactly the in-memory records and byte total"""
        cursor = self.conn.cursor()
        cursor.execute('SELECT COUNT(*) AS n, COALESCE(SUM(size_bytes), 0) AS total FROM studies')
        row = cursor.fetchone()
        return row['n'] == len(self._records) and row['total'] == self._total_bytes

    def close(self) -> None:
        self.conn.close()
