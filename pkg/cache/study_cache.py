#!/usr/bin/env python3
"""
Study cache: the cache manager (entries plus a relational metadata index)
and the eviction agent (LRU weights, watermark-driven eviction)
"""

import logging
from dataclasses import asdict, dataclass
from enum import Enum
from pathlib import Path
from typing import Dict, List, Optional, Union

from database.cache_index_service import CacheIndexService
from database.models import StudyRecord
from errors import AdmissionRejected, CachePreconditionError
from utils.jsonl import write_lines

logger = logging.getLogger(__name__)


class CacheOrigin(str, Enum):
    PASSIVE = "passive"
    SHORT_TERM = "short_term"
    LONG_TERM = "long_term"

    @property
    def is_prefetch(self) -> bool:
        return self is not CacheOrigin.PASSIVE


@dataclass
class CacheEntry:
    study_uid: str
    size_bytes: int
    inserted_at: float
    last_access_at: float
    origin: CacheOrigin
    access_seq: int = 0
    hits: int = 0

    def to_dict(self) -> Dict:
        data = asdict(self)
        data['origin'] = self.origin.value
        return data


class MissSignal:
    """Returned by touch for an absent study; falsy, never raised"""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __bool__(self) -> bool:
        return False

    def __repr__(self) -> str:
        return "MISS"


MISS = MissSignal()


def lru_weight(entry: CacheEntry, oldest_access: float, newest_access: float) -> float:
    """100 for the most recently used entry, 0 for the least, linear in between"""
    if not oldest_access <= entry.last_access_at <= newest_access:
        raise CachePreconditionError(
            f"last access {entry.last_access_at} of {entry.study_uid} outside [{oldest_access}, {newest_access}]"
        )
    if newest_access == oldest_access:
        return 100.0
    return 100.0 * (entry.last_access_at - oldest_access) / (newest_access - oldest_access)


class StudyCache:
    """Capacity-bounded study cache with watermark eviction"""

    def __init__(self, capacity_bytes: int, high_watermark: float = 0.95, low_watermark: float = 0.85,
                 index_service: Optional[CacheIndexService] = None):
        if capacity_bytes < 0:
            raise CachePreconditionError(f"capacity must be >= 0, got {capacity_bytes}")
        if not (0 <= low_watermark < high_watermark <= 1):
            raise CachePreconditionError(
                f"watermarks must satisfy 0 <= low < high <= 1, got {low_watermark}/{high_watermark}"
            )
        self.capacity_bytes = capacity_bytes
        self.high_watermark = high_watermark
        self.low_watermark = low_watermark
        self.index_service = index_service or CacheIndexService()
        self.entries: Dict[str, CacheEntry] = {}
        self.used_bytes = 0
        self.evictions = 0
        self._seq = 0

    def _next_seq(self) -> int:
        self._seq += 1
        return self._seq

    def __contains__(self, study_uid: object) -> bool:
        return study_uid in self.entries

    def __len__(self) -> int:
        return len(self.entries)

    def contains(self, study_uid: str) -> bool:
        return study_uid in self.entries

    def free_space(self) -> int:
        return self.capacity_bytes - self.used_bytes

    @property
    def high_bytes(self) -> float:
        return self.high_watermark * self.capacity_bytes

    @property
    def low_bytes(self) -> float:
        return self.low_watermark * self.capacity_bytes

    def eviction_order(self, exclude: Optional[str] = None) -> List[str]:
        """Entries by ascending weight; equal weights fall back to access order"""
        candidates = [e for uid, e in self.entries.items() if uid != exclude]
        if not candidates:
            return []
        oldest = min(e.last_access_at for e in candidates)
        newest = max(e.last_access_at for e in candidates)
        candidates.sort(key=lambda e: (lru_weight(e, oldest, newest), e.last_access_at, e.access_seq))
        return [e.study_uid for e in candidates]

    def admit(self, study: StudyRecord, now: float, origin: CacheOrigin = CacheOrigin.PASSIVE) -> List[str]:
        """
        Insert a study and return the uids evicted to make room.

        Crossing the high watermark evicts the lowest-weight entries until
        occupancy is back under the low watermark; the admitted study itself
        is never a victim. Admitting a study that is already cached counts as
        an access for demand traffic and is ignored for prefetches.
        """
        if study.size_bytes > self.capacity_bytes:
            raise AdmissionRejected(study.study_uid, study.size_bytes, self.capacity_bytes)

        existing = self.entries.get(study.study_uid)
        if existing is not None:
            if not origin.is_prefetch:
                self.touch(study.study_uid, now)
            return []

        evicted: List[str] = []
        needs_room = self.used_bytes + study.size_bytes > self.high_bytes

        entry = CacheEntry(
            study_uid=study.study_uid, size_bytes=study.size_bytes,
            inserted_at=now, last_access_at=now, origin=origin, access_seq=self._next_seq(),
        )
        self.entries[study.study_uid] = entry
        self.used_bytes += study.size_bytes

        if needs_room:
            for victim in self.eviction_order(exclude=study.study_uid):
                if self.used_bytes <= self.low_bytes:
                    break
                self.used_bytes -= self.entries.pop(victim).size_bytes
                evicted.append(victim)
            self.evictions += len(evicted)

        try:
            self.index_service.delete_entries(evicted)
            self.index_service.upsert_entry(entry.study_uid, entry.size_bytes, entry.inserted_at,
                                            entry.last_access_at, entry.access_seq, entry.origin.value)
        except Exception as e:
            logger.error(f"Cache metadata index out of sync after admitting {study.study_uid}: {e}")
            raise

        if evicted:
            logger.debug(f"Admitting {study.study_uid} evicted {len(evicted)} stud(ies)")
        return evicted

    def touch(self, study_uid: str, now: float) -> Union[CacheEntry, MissSignal]:
        """Mark a cached study as just used; MISS when it is not cached"""
        entry = self.entries.get(study_uid)
        if entry is None:
            return MISS
        if now < entry.last_access_at:
            raise CachePreconditionError(f"touch of {study_uid} at {now} precedes its last access")
        entry.last_access_at = now
        entry.access_seq = self._next_seq()
        entry.hits += 1
        self.index_service.touch_entry(study_uid, now, entry.access_seq)
        return entry

    def check_consistency(self) -> bool:
        """Metadata index, entry map and byte accounting agree and respect capacity"""
        sizes = {uid: e.size_bytes for uid, e in self.entries.items()}
        return (sizes == self.index_service.entry_sizes()
                and self.used_bytes == sum(sizes.values()) == self.index_service.used_bytes()
                and self.used_bytes <= self.capacity_bytes)

    def dump(self, path: Union[str, Path]) -> int:
        """Write every entry, least recently used first, as JSON Lines"""
        ordered = sorted(self.entries.values(), key=lambda e: (e.last_access_at, e.access_seq))
        return write_lines(path, (e.to_dict() for e in ordered))

    def close(self) -> None:
        self.index_service.close()
