#!/usr/bin/env python3
"""
Study sensor: characteristics of a specific study, looked up in the repository
"""

from database.models import StudyRecord
from database.repository_service import RepositoryIndex


def study_sensor_lookup(index: RepositoryIndex, study_uid: str) -> StudyRecord:
    """Exact lookup; raises StudyNotFound for an unknown uid"""
    return index.lookup(study_uid)


class StudySensor:
    def __init__(self, index: RepositoryIndex):
        self.index = index
        self.lookups = 0

    def lookup(self, study_uid: str) -> StudyRecord:
        self.lookups += 1
        return study_sensor_lookup(self.index, study_uid)
