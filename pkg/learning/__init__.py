#!/usr/bin/env python3
"""
Learning module: the MLP and the usage pattern recognizer built on it
"""

from .mlp import MlpMode, MlpModel, RunningMinMax, gradient_check, predict, train_incremental
from .patterns import (
    FEATURE_DIM, NodeHistory, PatternRecognizer, SessionTracker, SessionWindow, TrainingLog,
    build_sessions, classify, end_of_day_update, extract_features, label_session,
)

__all__ = [
    'MlpMode', 'MlpModel', 'RunningMinMax', 'gradient_check', 'predict', 'train_incremental',
    'FEATURE_DIM', 'NodeHistory', 'PatternRecognizer', 'SessionTracker', 'SessionWindow', 'TrainingLog',
    'build_sessions', 'classify', 'end_of_day_update', 'extract_features', 'label_session',
]
