#!/usr/bin/env python3
"""
Usage pattern recognition

Sessions are built by attributing each retrieve to the most recent prior query
of the same node. At the end of each day every session is labelled by rule
and the labels train the classifier incrementally; during the day the
classifier predicts the pattern of each new query from its features.

Feature layout (FEATURE_DIM = 17, every component in [0, 1]):

    0      hour of day / 23
    1      day of month / 31
    2      month / 12
    3-6    prior sessions of each class for this node, min(count, cap) / cap
    7-10   last class one-hot (all zero without history)
    11     time since the last session, log1p(s) / log1p(31 days), 1.0 without history
    12-16  presence flags for patient_id, modality, study_date_range, body_part, institution
"""

import logging
import math
import zlib
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from config import PatternSettings
from database.models import (
    QUERY_KEYS, SECONDS_PER_DAY, SessionLabel, TraceEvent, UsagePattern,
)
from database.repository_service import RepositoryIndex
from utils.jsonl import dumps_line
from .mlp import MlpMode, MlpModel

logger = logging.getLogger(__name__)

N_CLASSES = len(UsagePattern)
FEATURE_DIM = 3 + N_CLASSES + N_CLASSES + 1 + len(QUERY_KEYS)
SINCE_LAST_HORIZON_S = 31 * SECONDS_PER_DAY


@dataclass
class SessionWindow:
    """A query and the retrieves attributed to it"""

    query: TraceEvent
    retrieves: List[TraceEvent] = field(default_factory=list)
    window_seconds: int = 3600
    results: Tuple[str, ...] = ()
    predicted: Optional[UsagePattern] = None
    features: Optional[np.ndarray] = field(default=None, repr=False, compare=False)

    @property
    def aetitle(self) -> str:
        return self.query.aetitle

    @property
    def start(self) -> int:
        return self.query.timestamp

    @property
    def query_id(self) -> Optional[int]:
        return self.query.query_id

    def accepts(self, event: TraceEvent) -> bool:
        return (event.aetitle == self.aetitle
                and self.start <= event.timestamp < self.start + self.window_seconds)


class SessionTracker:
    """Online retrieve-to-query attribution, partitioned by node"""

    def __init__(self, window_seconds: int = 3600):
        self.window_seconds = window_seconds
        self._open: Dict[str, SessionWindow] = {}
        self._pending: List[SessionWindow] = []
        self.orphans: List[TraceEvent] = []

    def observe(self, event: TraceEvent) -> Optional[SessionWindow]:
        """Attach the event to its session and return that session (None for an orphan retrieve)"""
        if event.is_query:
            session = SessionWindow(query=event, window_seconds=self.window_seconds)
            self._open[event.aetitle] = session
            self._pending.append(session)
            return session

        session = self._open.get(event.aetitle)
        if session is None or not session.accepts(event):
            self.orphans.append(event)
            logger.debug(f"Retrieve of {event.study_uid} by {event.aetitle} has no attributable query")
            return None
        session.retrieves.append(event)
        return session

    def drain(self, now: Optional[float] = None) -> List[SessionWindow]:
        """
        Sessions ready for labelling, in query order.

        Without now every pending session is returned. With now, a session
        stays pending while its window is still open and no newer query of
        the same node has replaced it.
        """
        if now is None:
            sessions, self._pending = self._pending, []
            return sessions
        sessions, still_open = [], []
        for session in self._pending:
            if session.start + session.window_seconds > now and self._open.get(session.aetitle) is session:
                still_open.append(session)
            else:
                sessions.append(session)
        self._pending = still_open
        return sessions

    def earliest_pending_start(self) -> Optional[int]:
        return min((s.start for s in self._pending), default=None)


def build_sessions(events: Iterable[TraceEvent], window_seconds: int = 3600) -> List[SessionWindow]:
    tracker = SessionTracker(window_seconds)
    for event in events:
        tracker.observe(event)
    if tracker.orphans:
        logger.warning(f"{len(tracker.orphans)} retrieve(s) could not be attributed to a query")
    return tracker.drain()


def label_session(session: SessionWindow, index: RepositoryIndex) -> UsagePattern:
    """
    0 retrieves: InconsequentQuery. All retrieves of one patient (including a
    single retrieve): PatientRevising. Two or more retrieves of one modality
    across patients: ModalityRevising. Anything else: Other.
    """
    if not session.retrieves:
        return UsagePattern.INCONSEQUENT_QUERY
    studies = [index.lookup(event.study_uid) for event in session.retrieves]
    if len({s.patient_id for s in studies}) == 1:
        return UsagePattern.PATIENT_REVISING
    if len(studies) >= 2 and len({s.modality for s in studies}) == 1:
        return UsagePattern.MODALITY_REVISING
    return UsagePattern.OTHER


@dataclass
class NodeHistory:
    """Labelled session history of one node"""

    counts: List[int] = field(default_factory=lambda: [0] * N_CLASSES)
    last_pattern: Optional[UsagePattern] = None
    last_time: Optional[int] = None

    def record(self, pattern: UsagePattern, timestamp: int) -> None:
        self.counts[int(pattern) - 1] += 1
        self.last_pattern = pattern
        self.last_time = timestamp


def extract_features(session: SessionWindow, history: NodeHistory, history_cap: int = 20) -> np.ndarray:
    ts = session.start
    moment = datetime.fromtimestamp(ts, tz=timezone.utc)
    features = np.zeros(FEATURE_DIM)
    features[0] = moment.hour / 23
    features[1] = moment.day / 31
    features[2] = moment.month / 12

    for i, count in enumerate(history.counts):
        features[3 + i] = min(count, history_cap) / history_cap
    if history.last_pattern is not None:
        features[3 + N_CLASSES + int(history.last_pattern) - 1] = 1.0

    since = 3 + 2 * N_CLASSES
    if history.last_time is None:
        features[since] = 1.0
    else:
        elapsed = max(0, ts - history.last_time)
        features[since] = min(1.0, math.log1p(elapsed) / math.log1p(SINCE_LAST_HORIZON_S))

    present = set(session.query.query.present_keys()) if session.query.query is not None else set()
    for i, key in enumerate(QUERY_KEYS):
        features[since + 1 + i] = 1.0 if key in present else 0.0
    return features


def classify(model: MlpModel, features: Sequence[float]) -> Tuple[UsagePattern, float]:
    """Most probable class and its probability; ties go to the lowest class index"""
    probabilities = model.predict(features)
    best = int(np.argmax(probabilities))
    return UsagePattern(best + 1), float(probabilities[best])


class TrainingLog:
    """Labelled training instances, optionally mirrored to a JSON Lines file"""

    def __init__(self, path: Optional[Union[str, Path]] = None):
        self.entries: List[dict] = []
        self.path = Path(path) if path is not None else None
        self._file = None
        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self._file = open(self.path, "w", encoding="utf-8", newline="\n")

    def append(self, query_id: Optional[int], features: np.ndarray, label: UsagePattern) -> None:
        entry = {'qid': query_id, 'features': [float(v) for v in features], 'label': int(label)}
        self.entries.append(entry)
        if self._file is not None:
            self._file.write(dumps_line(entry) + "\n")

    def __len__(self) -> int:
        return len(self.entries)

    def close(self) -> None:
        if self._file is not None:
            self._file.close()
            self._file = None


def end_of_day_update(model: MlpModel, sessions: Sequence[SessionWindow], index: RepositoryIndex,
                      history: Dict[str, NodeHistory], settings: PatternSettings,
                      training_log: Optional[TrainingLog] = None) -> Tuple[MlpModel, List[SessionLabel]]:
    """
    Label the day's sessions, train on them, then fold the labels into the
    node histories. A session classified live keeps the features it was
    classified with; otherwise features use the histories as they stood
    before this update.
    """
    if not sessions:
        return model, []

    batch = []
    labels = []
    for session in sessions:
        pattern = label_session(session, index)
        features = session.features
        if features is None:
            features = extract_features(session, history.get(session.aetitle, NodeHistory()), settings.history_cap)
        batch.append((features, int(pattern) - 1))
        labels.append(SessionLabel(query_id=session.query_id if session.query_id is not None else -1,
                                   pattern=pattern))
        if training_log is not None:
            training_log.append(session.query_id, features, pattern)

    mlp = settings.mlp
    updated = model.train_incremental(batch, mlp.epochs, mlp.learning_rate, mlp.weight_decay, mlp.batch_size)

    for session, label in zip(sessions, labels):
        history.setdefault(session.aetitle, NodeHistory()).record(label.pattern, session.start)
    return updated, labels


def node_seed(seed: int, aetitle: str) -> int:
    """Stable per-node seed derived from the run seed"""
    return (seed + zlib.crc32(aetitle.encode("utf-8"))) % (2 ** 32)


class PatternRecognizer:
    """Classifier (shared or per node) plus the node histories it reads"""

    def __init__(self, settings: PatternSettings, index: RepositoryIndex, seed: int = 0,
                 training_log: Optional[TrainingLog] = None):
        self.settings = settings
        self.index = index
        self.seed = seed
        self.training_log = training_log
        self.history: Dict[str, NodeHistory] = {}
        self.models: Dict[str, MlpModel] = {}
        self.labelled: Dict[int, UsagePattern] = {}

    def _new_model(self, seed: int) -> MlpModel:
        return MlpModel.create(FEATURE_DIM, self.settings.mlp.hidden_sizes, N_CLASSES,
                               mode=MlpMode.CLASSIFIER, seed=seed)

    def model_for(self, aetitle: str) -> MlpModel:
        key = aetitle if self.settings.per_node_classifier else ""
        model = self.models.get(key)
        if model is None:
            model = self._new_model(node_seed(self.seed, key) if key else self.seed)
            self.models[key] = model
        return model

    def features(self, session: SessionWindow) -> np.ndarray:
        return extract_features(session, self.history.get(session.aetitle, NodeHistory()),
                                self.settings.history_cap)

    def classify(self, session: SessionWindow) -> Tuple[UsagePattern, float]:
        session.features = self.features(session)
        return classify(self.model_for(session.aetitle), session.features)

    def end_of_day(self, sessions: Sequence[SessionWindow]) -> List[UsagePattern]:
        """Train on a completed day; returns the label of each session, in input order"""
        if not sessions:
            return []
        if not self.settings.per_node_classifier:
            groups = {"": list(sessions)}
        else:
            groups = {}
            for session in sessions:
                groups.setdefault(session.aetitle, []).append(session)

        assigned: Dict[int, UsagePattern] = {}
        for key in sorted(groups):
            node_sessions = groups[key]
            model, labels = end_of_day_update(self.model_for(key or node_sessions[0].aetitle), node_sessions,
                                              self.index, self.history, self.settings, self.training_log)
            self.models[key] = model
            for session, label in zip(node_sessions, labels):
                assigned[id(session)] = label.pattern
                if session.query_id is not None:
                    self.labelled[session.query_id] = label.pattern

        logger.debug(f"Classifier trained on {len(sessions)} session(s)")
        return [assigned[id(session)] for session in sessions]

    def save(self, directory: Union[str, Path]) -> List[Path]:
        directory = Path(directory)
        paths = []
        for key, model in sorted(self.models.items()):
            name = f"classifier_{key}.json" if key else "classifier.json"
            paths.append(model.save(directory / name))
        return paths
