#!/usr/bin/env python3
"""
Cache metadata index: the cache manager's relational record of what is cached
"""

import logging
import sqlite3
from typing import Dict, List, Optional

from .models import get_db_connection, init_db

logger = logging.getLogger(__name__)


class CacheIndexService:
    """Service for managing cache entry metadata in the database"""

    def __init__(self, conn: Optional[sqlite3.Connection] = None):
        self.conn = conn or get_db_connection()
        init_db(self.conn)

    def upsert_entry(self, study_uid: str, size_bytes: int, inserted_at: float,
                     last_access_at: float, access_seq: int, origin: str) -> None:
        """Insert or replace an entry"""
        try:
            self.conn.execute('''
                INSERT OR REPLACE INTO cache_entries
                (study_uid, size_bytes, inserted_at, last_access_at, access_seq, origin)
                VALUES (?, ?, ?, ?, ?, ?)
            ''', (study_uid, size_bytes, inserted_at, last_access_at, access_seq, origin))
        except Exception as e:
            logger.error(f"Error recording cache entry {study_uid}: {e}")
            raise

    def touch_entry(self, study_uid: str, last_access_at: float, access_seq: int) -> bool:
        """Update recency of an entry; returns False when it is not indexed"""
        cursor = self.conn.execute(
            'UPDATE cache_entries SET last_access_at = ?, access_seq = ? WHERE study_uid = ?',
            (last_access_at, access_seq, study_uid),
        )
        return cursor.rowcount > 0

    def delete_entries(self, study_uids: List[str]) -> int:
        if not study_uids:
            return 0
        cursor = self.conn.executemany('DELETE FROM cache_entries WHERE study_uid = ?',
                                       [(uid,) for uid in study_uids])
        return cursor.rowcount

    def used_bytes(self) -> int:
        row = self.conn.execute('SELECT COALESCE(SUM(size_bytes), 0) AS total FROM cache_entries').fetchone()
        return int(row['total'])

    def entry_sizes(self) -> Dict[str, int]:
        rows = self.conn.execute('SELECT study_uid, size_bytes FROM cache_entries').fetchall()
        return {row['study_uid']: row['size_bytes'] for row in rows}

    def close(self) -> None:
        self.conn.close()
