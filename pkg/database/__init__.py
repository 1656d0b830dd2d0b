#!/usr/bin/env python3
"""
Database module: domain models, repository index and cache metadata index
"""

from .models import (
    BodyPart, EventKind, Modality, PatientSex, QuerySpec, SessionLabel,
    StudyRecord, TraceEvent, UsagePattern, get_db_connection, init_db,
)
from .repository_service import RepositoryIndex
from .cache_index_service import CacheIndexService
from .validation import Finding, FindingKind, ValidationReport, validate_trace

__all__ = [
    'BodyPart', 'EventKind', 'Modality', 'PatientSex', 'QuerySpec', 'SessionLabel',
    'StudyRecord', 'TraceEvent', 'UsagePattern', 'get_db_connection', 'init_db',
    'RepositoryIndex', 'CacheIndexService',
    'Finding', 'FindingKind', 'ValidationReport', 'validate_trace',
]
