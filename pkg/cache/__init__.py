#!/usr/bin/env python3
"""
Cache module: study cache manager and LRU-weight eviction
"""

from .study_cache import MISS, CacheEntry, CacheOrigin, MissSignal, StudyCache, lru_weight

__all__ = ['MISS', 'CacheEntry', 'CacheOrigin', 'MissSignal', 'StudyCache', 'lru_weight']
