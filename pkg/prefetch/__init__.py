#!/usr/bin/env python3
"""
Prefetch module: popularity counters, per-node scorers and prefetch planners
"""

from .counters import AgeBucket, CategoryCounters, age_bucket, update_counters
from .planner import (
    CandidateSource, PrefetchCandidate, ShortTermPlan, long_term_prefetch, plan_short_term,
    rank_candidates, secondary_query, short_term_prefetch, static_rule_prefetch,
)
from .scorer import NodeScorer, ScorerBank, ScorerFeatures, train_scorer

__all__ = [
    'AgeBucket', 'CategoryCounters', 'age_bucket', 'update_counters',
    'CandidateSource', 'PrefetchCandidate', 'ShortTermPlan', 'long_term_prefetch', 'plan_short_term',
    'rank_candidates', 'secondary_query', 'short_term_prefetch', 'static_rule_prefetch',
    'NodeScorer', 'ScorerBank', 'ScorerFeatures', 'train_scorer',
]
