#!/usr/bin/env python3
"""
Prefetching rule: one MLP scorer per node estimating how likely a study is
to be requested after a search

Scorer feature layout:

    time since the study was produced, log1p(days), min-max scaled online
    body part one-hot (known parts, then other)
    modality one-hot (known modalities, then other)
    patient sex one-hot (M, F, O)
    patient age at request time / 100, clamped
    usage pattern one-hot (all zero when no pattern applies)
    institution one-hot (institutions of the repository, then other)
"""

import logging
import math
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from config import PrefetchSettings
from database.models import (
    BodyPart, Modality, PatientSex, StudyRecord, TraceEvent, UsagePattern, to_date,
)
from database.repository_service import RepositoryIndex
from learning.mlp import MlpMode, MlpModel, RunningMinMax
from learning.patterns import SessionWindow, node_seed

logger = logging.getLogger(__name__)

BODY_PARTS = [p.value for p in BodyPart.known()]
MODALITIES = [m.value for m in Modality.known()]
SEXES = [s.value for s in PatientSex]


class ScorerFeatures:
    """Encodes (study, request time, pattern) into the scorer layout"""

    def __init__(self, institutions: Sequence[str]):
        self.institutions = list(institutions)
        self.age_scale = RunningMinMax()
        self.dim = 1 + (len(BODY_PARTS) + 1) + (len(MODALITIES) + 1) + len(SEXES) + 1 \
            + len(UsagePattern) + (len(self.institutions) + 1)

    @staticmethod
    def log_age(study: StudyRecord, now: int) -> float:
        return math.log1p(max(0, (to_date(now) - study.study_date).days))

    def observe(self, study: StudyRecord, now: int) -> None:
        self.age_scale.update(self.log_age(study, now))

    def encode(self, study: StudyRecord, now: int, pattern: Optional[UsagePattern]) -> np.ndarray:
        vec = np.zeros(self.dim)
        vec[0] = self.age_scale.scale(self.log_age(study, now))
        pos = 1
        pos = _one_hot(vec, pos, BODY_PARTS, study.body_part.value)
        pos = _one_hot(vec, pos, MODALITIES, study.modality.value)
        vec[pos + SEXES.index(study.patient_sex.value)] = 1.0
        pos += len(SEXES)
        vec[pos] = min(1.0, max(0.0, study.patient_age_at(now) / 100))
        pos += 1
        if pattern is not None:
            vec[pos + int(pattern) - 1] = 1.0
        pos += len(UsagePattern)
        _one_hot(vec, pos, self.institutions, study.institution)
        return vec


def _one_hot(vec: np.ndarray, pos: int, vocabulary: List[str], token: str) -> int:
    """Set the slot of token (or the trailing other slot) and return the next position"""
    try:
        vec[pos + vocabulary.index(token)] = 1.0
    except ValueError:
        vec[pos + len(vocabulary)] = 1.0
    return pos + len(vocabulary) + 1


class NodeScorer:
    """Scorer of one node with the observations awaiting its next training"""

    def __init__(self, aetitle: str, model: MlpModel):
        self.aetitle = aetitle
        self.model = model
        self.pending: List[Tuple[np.ndarray, float]] = []
        self.trainings = 0


class ScorerBank:
    """Per-node scorers, created lazily with shared defaults"""

    def __init__(self, settings: PrefetchSettings, institutions: Sequence[str], seed: int = 0):
        self.settings = settings
        self.features = ScorerFeatures(institutions)
        self.seed = seed
        self.scorers: Dict[str, NodeScorer] = {}
        self.days_observed = 0
        self._default: Optional[MlpModel] = None

    def _new_model(self, seed: int) -> MlpModel:
        return MlpModel.create(self.features.dim, self.settings.mlp.hidden_sizes, 1,
                               mode=MlpMode.SCORER, seed=seed)

    def scorer_for(self, aetitle: str) -> NodeScorer:
        scorer = self.scorers.get(aetitle)
        if scorer is None:
            scorer = NodeScorer(aetitle, self._new_model(node_seed(self.seed, aetitle)))
            self.scorers[aetitle] = scorer
        return scorer

    def _encode(self, studies: Sequence[StudyRecord], now: int, pattern: Optional[UsagePattern]) -> np.ndarray:
        return np.array([self.features.encode(s, now, pattern) for s in studies])

    def score(self, aetitle: str, studies: Sequence[StudyRecord], now: int,
              pattern: Optional[UsagePattern]) -> List[float]:
        if not studies:
            return []
        outputs = self.scorer_for(aetitle).model.predict_batch(self._encode(studies, now, pattern))
        return [float(v) for v in outputs[:, 0]]

    def mean_score(self, studies: Sequence[StudyRecord], now: int) -> List[float]:
        """Node-independent score: mean over the existing scorers, without a usage pattern"""
        if not studies:
            return []
        x = self._encode(studies, now, None)
        models = [s.model for _, s in sorted(self.scorers.items())]
        if not models:
            if self._default is None:
                self._default = self._new_model(self.seed)
            models = [self._default]
        outputs = np.mean([m.predict_batch(x)[:, 0] for m in models], axis=0)
        return [float(v) for v in outputs]

    def observe(self, aetitle: str, study: StudyRecord, now: int, pattern: Optional[UsagePattern],
                requested: bool) -> None:
        self.features.observe(study, now)
        features = self.features.encode(study, now, pattern)
        self.scorer_for(aetitle).pending.append((features, 1.0 if requested else 0.0))

    def end_of_day(self) -> int:
        """Train every scorer on its pending observations once per training period"""
        self.days_observed += 1
        if self.days_observed % self.settings.scorer_training_period_days:
            return 0
        mlp = self.settings.mlp
        trained = 0
        for aetitle in sorted(self.scorers):
            scorer = self.scorers[aetitle]
            if not scorer.pending:
                continue
            scorer.model = scorer.model.train_incremental(
                scorer.pending, mlp.epochs, mlp.learning_rate, mlp.weight_decay, mlp.batch_size,
            )
            trained += len(scorer.pending)
            scorer.pending = []
            scorer.trainings += 1
        if trained:
            logger.debug(f"Scorers trained on {trained} observation(s)")
        return trained

    def save(self, directory: Union[str, Path]) -> List[Path]:
        directory = Path(directory)
        return [self.scorers[ae].model.save(directory / f"scorer_{ae}.json") for ae in sorted(self.scorers)]


def train_scorer(bank: ScorerBank, sessions: Sequence[SessionWindow], labels: Sequence[UsagePattern],
                 day_retrieves: Sequence[TraceEvent], index: RepositoryIndex) -> ScorerBank:
    """
    Build (features, 0/1) observations from every study each search returned:
    positive when the same node retrieved it at or after the search time.
    Training itself happens once per configured period.
    """
    retrieved: Dict[str, List[Tuple[int, str]]] = {}
    for event in day_retrieves:
        retrieved.setdefault(event.aetitle, []).append((event.timestamp, event.study_uid))

    for session, pattern in zip(sessions, labels):
        later = {uid for ts, uid in retrieved.get(session.aetitle, ()) if ts >= session.start}
        for uid in session.results:
            study = index.lookup(uid)
            bank.observe(session.aetitle, study, session.start, pattern, uid in later)

    bank.end_of_day()
    return bank
