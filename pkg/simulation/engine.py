#!/usr/bin/env python3
"""
Trace replay through the gateway

One replay process walks the trace in timestamp order. Between events it
fires the sensor ticks (long-term prefetch opportunities) and the midnight
boundaries (classifier and scorer training). Cache misses become demand
transfers on the WAN link and are admitted when the transfer completes.
"""

import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Set

import simpy

from cache.study_cache import CacheOrigin, StudyCache
from config import SimConfig
from database.models import SECONDS_PER_DAY, StudyRecord, TraceEvent, day_index, day_start, to_date
from database.repository_service import RepositoryIndex
from database.validation import validate_trace
from errors import AdmissionRejected, ValidationFailed
from learning.patterns import PatternRecognizer, SessionTracker, TrainingLog
from prefetch.counters import CategoryCounters
from prefetch.planner import PrefetchCandidate, long_term_prefetch, plan_short_term, static_rule_prefetch
from prefetch.scorer import ScorerBank, train_scorer
from sensors.message_sensor import MessageSensor
from sensors.network_sensor import is_idle, network_utilization
from sensors.study_sensor import StudySensor
from .network import Priority, Transfer, WanLink

logger = logging.getLogger(__name__)


@dataclass
class DayMetrics:
    day: str
    requests: int = 0
    hits: int = 0
    misses: int = 0
    retrieval_time_s: float = 0.0
    bytes_prefetched: int = 0
    evictions: int = 0

    @property
    def hit_ratio(self) -> float:
        return self.hits / self.requests if self.requests else 0.0


@dataclass
class SimReport:
    config: str
    cache_capacity_bytes: int
    hit_ratio: float = 0.0
    retrieval_time_per_image_s: float = 0.0
    total_requests: int = 0
    hits: int = 0
    misses: int = 0
    total_retrieval_time_s: float = 0.0
    images_requested: int = 0
    bytes_prefetched: int = 0
    prefetched_studies: int = 0
    prefetch_hits: int = 0
    prefetch_precision: float = 0.0
    evictions: int = 0
    sessions: int = 0
    classifier_accuracy: Optional[float] = None
    per_day: List[DayMetrics] = field(default_factory=list)
    outcomes: List[bool] = field(default_factory=list, repr=False)

    def to_dict(self) -> Dict:
        data = asdict(self)
        data.pop('outcomes')
        return data


@dataclass
class RunArtifacts:
    """Optional files a run writes besides its report"""

    message_log: Optional[Path] = None
    training_log: Optional[Path] = None
    cache_dump: Optional[Path] = None
    checkpoint_dir: Optional[Path] = None


class GatewaySimulator:
    """Gateway under one SimConfig, replaying one trace"""

    def __init__(self, events: Sequence[TraceEvent], index: RepositoryIndex, cfg: SimConfig,
                 artifacts: Optional[RunArtifacts] = None):
        self.events = events
        self.index = index
        self.cfg = cfg
        self.artifacts = artifacts or RunArtifacts()

        start = day_start(events[0].timestamp) if events else 0
        self.env = simpy.Environment(initial_time=start)
        self.cache = StudyCache(cfg.cache_capacity_bytes, cfg.cache.high_watermark, cfg.cache.low_watermark)
        self.link = WanLink(self.env, cfg.network, on_complete=self._on_transfer_complete)
        self.messages = MessageSensor(cfg.sensors.gateway_ae, self.artifacts.message_log,
                                      keep_in_memory=False)
        self.studies = StudySensor(index)
        self.tracker = SessionTracker(cfg.patterns.window_seconds)

        self.learning = cfg.prefetch_enabled
        self.training_log: Optional[TrainingLog] = None
        self.recognizer: Optional[PatternRecognizer] = None
        self.scorers: Optional[ScorerBank] = None
        self.counters: Optional[CategoryCounters] = None
        if self.learning:
            self.training_log = TrainingLog(self.artifacts.training_log)
            self.recognizer = PatternRecognizer(cfg.patterns, index, seed=cfg.seed, training_log=self.training_log)
            self.scorers = ScorerBank(cfg.prefetch, index.institutions(), seed=cfg.seed)
            self.counters = CategoryCounters(cfg.prefetch.counter_decay_days)

        self.report = SimReport(config=cfg.label, cache_capacity_bytes=cfg.cache_capacity_bytes)
        self._days: Dict[int, DayMetrics] = {}
        self._day_retrieves: List[TraceEvent] = []
        self._unused_prefetches: Set[str] = set()
        self._predictions: Dict[int, int] = {}
        self._correct_predictions = 0
        self._scored_predictions = 0

    # Bookkeeping ------------------------------------------------------------

    def _day(self, timestamp: float) -> DayMetrics:
        key = day_index(int(timestamp))
        metrics = self._days.get(key)
        if metrics is None:
            metrics = DayMetrics(day=to_date(key * SECONDS_PER_DAY).isoformat())
            self._days[key] = metrics
        return metrics

    def _admit(self, study: StudyRecord, origin: CacheOrigin) -> bool:
        try:
            evicted = self.cache.admit(study, self.env.now, origin)
        except AdmissionRejected as e:
            logger.debug(f"Not caching: {e}")
            return False
        if evicted:
            self.report.evictions += len(evicted)
            self._day(self.env.now).evictions += len(evicted)
            self._unused_prefetches.difference_update(evicted)
        return True

    def _on_transfer_complete(self, transfer: Transfer) -> None:
        if transfer.priority is Priority.PREFETCH:
            self.report.bytes_prefetched += transfer.study.size_bytes
            self._day(self.env.now).bytes_prefetched += transfer.study.size_bytes
            already_cached = self.cache.contains(transfer.study_uid)
            if self._admit(transfer.study, transfer.origin) and not already_cached:
                self.report.prefetched_studies += 1
                self._unused_prefetches.add(transfer.study_uid)
        else:
            self._admit(transfer.study, CacheOrigin.PASSIVE)

    def _record_request(self, event: TraceEvent, study: StudyRecord, hit: bool, seconds: float,
                        ordinal: int) -> None:
        self.report.total_requests += 1
        self.report.outcomes[ordinal] = hit
        self.report.total_retrieval_time_s += seconds
        self.report.images_requested += study.num_images
        day = self._day(event.timestamp)
        day.requests += 1
        day.retrieval_time_s += seconds
        if hit:
            self.report.hits += 1
            day.hits += 1
        else:
            self.report.misses += 1
            day.misses += 1
        if event.study_uid in self._unused_prefetches:
            self._unused_prefetches.discard(event.study_uid)
            self.report.prefetch_hits += 1

    # Requests ---------------------------------------------------------------

    def _handle_retrieve(self, event: TraceEvent) -> None:
        study = self.studies.lookup(event.study_uid)
        ordinal = len(self.report.outcomes)
        self.report.outcomes.append(False)
        self.messages.record(event)
        self.tracker.observe(event)
        self._day_retrieves.append(event)
        if self.counters is not None:
            self.counters.update(study, event.timestamp)

        if self.cache.touch(study.study_uid, self.env.now):
            self._record_request(event, study, True, self.cfg.network.lan_time(study.size_bytes), ordinal)
            return

        transfer = self.link.in_flight.get(study.study_uid)
        if transfer is not None and not transfer.started and transfer.priority is Priority.PREFETCH:
            self.link.cancel(study.study_uid)
            transfer = None
        if transfer is None:
            transfer = self.link.submit(study, Priority.DEMAND, CacheOrigin.PASSIVE)
        self.env.process(self._await_transfer(event, study, transfer, ordinal))

    def _await_transfer(self, event: TraceEvent, study: StudyRecord, transfer: Transfer, ordinal: int):
        requested_at = self.env.now
        yield transfer.done
        if transfer.priority is Priority.PREFETCH:
            self.cache.touch(study.study_uid, self.env.now)
        self._record_request(event, study, False, self.env.now - requested_at, ordinal)

    def _handle_query(self, event: TraceEvent) -> None:
        results = [s.study_uid for s in self.index.query(event.query, as_of=event.event_date)]
        self.messages.record(event, results)
        session = self.tracker.observe(event)
        session.results = tuple(results)

        if self.cfg.static_rules:
            plan = static_rule_prefetch(event.query, self.index, self.cache, self.cfg.prefetch,
                                        event.timestamp, exclude=self.link.in_flight)
            self._launch(plan, CacheOrigin.SHORT_TERM)
            return
        if not self.learning:
            return

        predicted, confidence = self.recognizer.classify(session)
        session.predicted = predicted
        if event.query_id is not None:
            self._predictions[event.query_id] = int(predicted)
        plan = plan_short_term(
            event.query, results, predicted, self.index, self.cache,
            lambda studies: self.scorers.score(event.aetitle, studies, event.timestamp, predicted),
            self.cfg.prefetch, event.timestamp, exclude=self.link.in_flight,
        )
        logger.debug(f"Query {event.query_id} from {event.aetitle}: {predicted.name} ({confidence:.2f}), "
                     f"{len(plan.candidates)} short-term candidate(s)")
        self._launch(plan.candidates, CacheOrigin.SHORT_TERM)

    def _launch(self, candidates: Sequence[PrefetchCandidate], origin: CacheOrigin) -> None:
        for candidate in candidates:
            self.link.submit(self.index.lookup(candidate.study_uid), Priority.PREFETCH, origin)

    # Periodic work ------------------------------------------------------------

    def _sensor_tick(self) -> None:
        if not self.learning or self.link.pending_prefetches():
            return
        now = int(self.env.now)
        utilization = network_utilization(self.link.busy_log, now, self.cfg.sensors.window_seconds)
        if not is_idle(utilization, self.cfg.sensors.idle_threshold):
            return
        candidates = long_term_prefetch(
            self.counters, self.index, self.cache, utilization,
            lambda studies: self.scorers.mean_score(studies, now),
            self.cfg.prefetch, now, self.cfg.sensors.idle_threshold, exclude=self.link.in_flight,
        )
        if candidates:
            logger.debug(f"Long-term prefetch of {len(candidates)} stud(ies) at {now}")
        self._launch(candidates, CacheOrigin.LONG_TERM)

    def _end_of_day(self, final: bool = False) -> None:
        sessions = self.tracker.drain(None if final else self.env.now)
        if self.learning and sessions:
            labels = self.recognizer.end_of_day(sessions)
            for session, label in zip(sessions, labels):
                predicted = self._predictions.pop(session.query_id, None) if session.query_id is not None else None
                if predicted is not None:
                    self._scored_predictions += 1
                    self._correct_predictions += int(predicted == int(label))
            train_scorer(self.scorers, sessions, labels, self._day_retrieves, self.index)
        self.report.sessions += len(sessions)
        # Sessions still open carry over with the retrieves they may still claim
        carried = self.tracker.earliest_pending_start()
        self._day_retrieves = ([] if carried is None
                               else [e for e in self._day_retrieves if e.timestamp >= carried])
        self.link.busy_log.prune(self.env.now - self.cfg.sensors.window_seconds)

    def _replay(self):
        window = self.cfg.sensors.window_seconds
        next_tick = (int(self.env.now) // window + 1) * window
        next_midnight = day_start(int(self.env.now)) + SECONDS_PER_DAY

        for event in self.events:
            while min(next_tick, next_midnight) <= event.timestamp:
                boundary = min(next_tick, next_midnight)
                if boundary > self.env.now:
                    yield self.env.timeout(boundary - self.env.now)
                if boundary == next_midnight:
                    self._end_of_day()
                    next_midnight += SECONDS_PER_DAY
                if boundary == next_tick:
                    self._sensor_tick()
                    next_tick += window
            if event.timestamp > self.env.now:
                yield self.env.timeout(event.timestamp - self.env.now)

            if event.is_query:
                self._handle_query(event)
            else:
                self._handle_retrieve(event)

    # Entry point ----------------------------------------------------------------

    def run(self) -> SimReport:
        self.env.process(self._replay())
        self.env.run()
        self._end_of_day(final=True)
        self._finish()
        return self.report

    def _finish(self) -> None:
        report = self.report
        report.hit_ratio = report.hits / report.total_requests if report.total_requests else 0.0
        denominator = report.images_requested if self.cfg.per_image_normalization else report.total_requests
        report.retrieval_time_per_image_s = report.total_retrieval_time_s / denominator if denominator else 0.0
        report.prefetch_precision = (report.prefetch_hits / report.prefetched_studies
                                     if report.prefetched_studies else 0.0)
        if self._scored_predictions:
            report.classifier_accuracy = self._correct_predictions / self._scored_predictions
        report.per_day = [self._days[k] for k in sorted(self._days)]

        self.messages.close()
        if self.training_log is not None:
            self.training_log.close()
        if self.artifacts.cache_dump is not None:
            self.cache.dump(self.artifacts.cache_dump)
        if self.artifacts.checkpoint_dir is not None and self.learning:
            self.recognizer.save(self.artifacts.checkpoint_dir)
            self.scorers.save(self.artifacts.checkpoint_dir)
        self.cache.close()

        logger.info(
            f"[{report.config} @ {report.cache_capacity_bytes} B] hit ratio {report.hit_ratio:.3f}, "
            f"retrieval time {report.retrieval_time_per_image_s:.3f} s, "
            f"{report.bytes_prefetched} B prefetched, {report.evictions} evictions"
        )


def run_simulation(trace: Sequence[TraceEvent], index: RepositoryIndex, cfg: SimConfig,
                   artifacts: Optional[RunArtifacts] = None) -> SimReport:
    """Replay a validated trace under cfg; an invalid trace raises ValidationFailed"""
    cfg.validate()
    validation = validate_trace(trace, index)
    if not validation.is_valid:
        raise ValidationFailed(validation)
    return GatewaySimulator(trace, index, cfg, artifacts).run()
