#!/usr/bin/env python3
"""
Prefetching agent: long-term (idle, popularity driven), short-term (query
driven, pattern aware) and the static-rule baseline

Planners are pure: they read the cache and index and return candidate lists
sorted by descending score with ascending uid as tie-break. Executing the
transfers is left to the simulator.
"""

import logging
from collections import Counter
from dataclasses import dataclass
from datetime import timedelta
from enum import Enum
from typing import Callable, Collection, Iterable, List, Optional, Sequence

from cache.study_cache import StudyCache
from config import PrefetchSettings
from database.models import QuerySpec, StudyRecord, UsagePattern, to_date
from database.repository_service import RepositoryIndex
from sensors.network_sensor import is_idle
from .counters import CategoryCounters

logger = logging.getLogger(__name__)

MODALITY_WINDOW_DAYS = 31

Scorer = Callable[[Sequence[StudyRecord]], Sequence[float]]


class CandidateSource(str, Enum):
    QUERY_RESULTS = "query_results"
    PATTERN_QUERY = "pattern_query"
    LONG_TERM = "long_term"
    STATIC_RULE = "static_rule"


@dataclass(frozen=True)
class PrefetchCandidate:
    study_uid: str
    score: float
    source: CandidateSource
    size_bytes: int


@dataclass
class ShortTermPlan:
    candidates: List[PrefetchCandidate]
    secondary_query: Optional[QuerySpec]


def rank_candidates(candidates: Iterable[PrefetchCandidate]) -> List[PrefetchCandidate]:
    """Keep the best-scored occurrence of each uid and sort by (-score, uid)"""
    best = {}
    for candidate in candidates:
        current = best.get(candidate.study_uid)
        if current is None or candidate.score > current.score:
            best[candidate.study_uid] = candidate
    return sorted(best.values(), key=lambda c: (-c.score, c.study_uid))


def fill_budget(candidates: Sequence[PrefetchCandidate], budget_bytes: float) -> List[PrefetchCandidate]:
    """Greedy in rank order, skipping candidates that no longer fit"""
    chosen, used = [], 0
    for candidate in candidates:
        if used + candidate.size_bytes <= budget_bytes:
            chosen.append(candidate)
            used += candidate.size_bytes
    return chosen


def _score(studies: Sequence[StudyRecord], scorer: Scorer, source: CandidateSource,
           floor: float) -> List[PrefetchCandidate]:
    if not studies:
        return []
    scores = scorer(studies)
    return [
        PrefetchCandidate(s.study_uid, float(score), source, s.size_bytes)
        for s, score in zip(studies, scores) if score >= floor
    ]


def _fetchable(studies: Iterable[StudyRecord], cache: StudyCache, exclude: Collection[str]) -> List[StudyRecord]:
    return [s for s in studies if not cache.contains(s.study_uid) and s.study_uid not in exclude]


def long_term_prefetch(counters: CategoryCounters, index: RepositoryIndex, cache: StudyCache,
                       net_utilization: float, scorer: Scorer, settings: PrefetchSettings,
                       now: int, idle_threshold: float = 0.3,
                       exclude: Collection[str] = ()) -> List[PrefetchCandidate]:
    """
    Studies of the most popular (modality, age) cells, when the network is
    idle and the cache has free space. The byte total stays within
    fill_fraction of the free space and below the high watermark.
    """
    if not is_idle(net_utilization, idle_threshold) or cache.free_space() <= 0:
        return []
    budget = min(cache.free_space() * settings.fill_fraction, cache.high_bytes - cache.used_bytes)
    if budget <= 0:
        return []

    today = to_date(now)
    pool = {}
    for modality, bucket, _count in counters.top_cells(settings.top_k):
        window = (today - timedelta(days=bucket.max_age_days), today)
        for study in index.query(QuerySpec(modality=modality, study_date_range=window), as_of=today):
            pool[study.study_uid] = study
    studies = _fetchable((pool[uid] for uid in sorted(pool)), cache, exclude)
    ranked = rank_candidates(_score(studies, scorer, CandidateSource.LONG_TERM, settings.score_floor))
    return fill_budget(ranked, budget)


def _dominant(values: Iterable[str]) -> Optional[str]:
    """Most frequent value; ties go to the smallest"""
    counts = Counter(values)
    if not counts:
        return None
    return min(counts, key=lambda v: (-counts[v], v))


def secondary_query(query: QuerySpec, results: Sequence[StudyRecord], predicted: UsagePattern,
                    now: int) -> Optional[QuerySpec]:
    """Follow-up query the predicted pattern calls for, if any"""
    if predicted is UsagePattern.PATIENT_REVISING:
        patient_id = _dominant(s.patient_id for s in results) or query.patient_id
        return QuerySpec(patient_id=patient_id) if patient_id else None
    if predicted is UsagePattern.MODALITY_REVISING:
        modality = query.modality.value if query.modality is not None \
            else _dominant(s.modality.value for s in results)
        if modality is None:
            return None
        today = to_date(now)
        return QuerySpec(modality=modality,
                         study_date_range=(today - timedelta(days=MODALITY_WINDOW_DAYS), today))
    return None


def plan_short_term(query: QuerySpec, query_results: Sequence[str], predicted: UsagePattern,
                    index: RepositoryIndex, cache: StudyCache, scorer: Scorer,
                    settings: PrefetchSettings, now: int, exclude: Collection[str] = ()) -> ShortTermPlan:
    results = [index.lookup(uid) for uid in query_results]

    # Process 1: the query's own results that fit the predicted pattern
    if predicted is UsagePattern.PATIENT_REVISING:
        patient_id = _dominant(s.patient_id for s in results)
        matching = [s for s in results if s.patient_id == patient_id]
    elif predicted is UsagePattern.MODALITY_REVISING:
        modality = _dominant(s.modality.value for s in results)
        matching = [s for s in results if s.modality.value == modality]
    else:
        matching = results
    first = _score(_fetchable(matching, cache, exclude), scorer,
                   CandidateSource.QUERY_RESULTS, settings.score_floor)

    # Process 2: a follow-up query, skipping what process 1 already covers
    follow_up = secondary_query(query, results, predicted, now)
    second: List[PrefetchCandidate] = []
    if follow_up is not None:
        covered = {c.study_uid for c in first} | {s.study_uid for s in matching}
        extra = [s for s in index.query(follow_up, as_of=to_date(now)) if s.study_uid not in covered]
        second = _score(_fetchable(extra, cache, exclude), scorer,
                        CandidateSource.PATTERN_QUERY, settings.score_floor)

    ranked = rank_candidates(first + second)
    budget = settings.short_term_budget_fraction * cache.capacity_bytes
    return ShortTermPlan(candidates=fill_budget(ranked, budget), secondary_query=follow_up)


def short_term_prefetch(query: QuerySpec, query_results: Sequence[str], predicted: UsagePattern,
                        index: RepositoryIndex, cache: StudyCache, scorer: Scorer,
                        settings: PrefetchSettings, now: int,
                        exclude: Collection[str] = ()) -> List[PrefetchCandidate]:
    return plan_short_term(query, query_results, predicted, index, cache, scorer,
                           settings, now, exclude).candidates


def static_rule_prefetch(query: QuerySpec, index: RepositoryIndex, cache: StudyCache,
                         settings: PrefetchSettings, now: int,
                         exclude: Collection[str] = ()) -> List[PrefetchCandidate]:
    """
    Fixed rules without learning: a patient query prefetches that patient's
    studies, a modality query the last month of that modality. Newest first.
    """
    today = to_date(now)
    if query.patient_id is not None:
        studies = index.query(QuerySpec(patient_id=query.patient_id), as_of=today)
    elif query.modality is not None:
        window = (today - timedelta(days=MODALITY_WINDOW_DAYS), today)
        studies = index.query(QuerySpec(modality=query.modality, study_date_range=window), as_of=today)
    else:
        return []
    candidates = [
        PrefetchCandidate(s.study_uid, 1.0 / (1.0 + (today - s.study_date).days),
                          CandidateSource.STATIC_RULE, s.size_bytes)
        for s in _fetchable(studies, cache, exclude)
    ]
    return fill_budget(rank_candidates(candidates), settings.short_term_budget_fraction * cache.capacity_bytes)
