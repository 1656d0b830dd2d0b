#!/usr/bin/env python3
"""
Popularity counters for long-term prefetching

Every requested study increments one (modality, age bucket) cell. Buckets are
cumulative windows when used for selection: the cell (CT, last_month) stands
for CT studies produced within the last 31 days. Counts halve every
counter_decay_days so popularity follows the recent workload.
"""

import logging
from datetime import date
from enum import Enum
from typing import Dict, List, Optional, Tuple

from database.models import StudyRecord, day_index, to_date

logger = logging.getLogger(__name__)


class AgeBucket(str, Enum):
    LAST_DAY = "last_day"
    LAST_WEEK = "last_week"
    LAST_MONTH = "last_month"
    LAST_YEAR = "last_year"
    OLDER = "older"

    @property
    def max_age_days(self) -> Optional[int]:
        return BUCKET_DAYS.get(self)

    @property
    def rank(self) -> int:
        return list(AgeBucket).index(self)


BUCKET_DAYS = {
    AgeBucket.LAST_DAY: 1,
    AgeBucket.LAST_WEEK: 7,
    AgeBucket.LAST_MONTH: 31,
    AgeBucket.LAST_YEAR: 366,
}


def age_bucket(study_date: date, on: date) -> AgeBucket:
    age = (on - study_date).days
    for bucket, limit in BUCKET_DAYS.items():
        if age <= limit:
            return bucket
    return AgeBucket.OLDER


Cell = Tuple[str, AgeBucket]


class CategoryCounters:
    """Hit counts per (modality, age bucket)"""

    def __init__(self, decay_days: int = 30):
        self.decay_days = decay_days
        self.counts: Dict[Cell, float] = {}
        self._epoch: Optional[int] = None

    def decay_to(self, now: int) -> None:
        today = day_index(now)
        if self._epoch is None:
            self._epoch = today
            return
        while today - self._epoch >= self.decay_days:
            self._epoch += self.decay_days
            for cell in self.counts:
                self.counts[cell] /= 2.0
            logger.debug(f"Prefetch counters halved (epoch day {self._epoch})")

    def update(self, study: StudyRecord, now: int) -> Cell:
        self.decay_to(now)
        cell = (study.modality.value, age_bucket(study.study_date, to_date(now)))
        self.counts[cell] = self.counts.get(cell, 0.0) + 1.0
        return cell

    def get(self, modality: str, bucket: AgeBucket) -> float:
        return self.counts.get((modality, bucket), 0.0)

    def top_cells(self, k: int) -> List[Tuple[str, AgeBucket, float]]:
        """The k most popular prefetchable cells; ties by modality then bucket"""
        cells = [(m, b, c) for (m, b), c in self.counts.items() if b is not AgeBucket.OLDER and c > 0]
        cells.sort(key=lambda cell: (-cell[2], cell[0], cell[1].rank))
        return cells[:k]

    def total(self) -> float:
        return sum(self.counts.values())


def update_counters(counters: CategoryCounters, study: StudyRecord, now: int) -> CategoryCounters:
    counters.update(study, now)
    return counters
