#!/usr/bin/env python3
"""
Synthetic workload generator

Produces a repository index and a query/retrieve trace whose sessions follow
the four usage behaviours, with the behaviour mixture, popularity skew and
study sizes under configuration control. Same seed, same output.
"""

import logging
import math
from bisect import bisect_right
from dataclasses import dataclass
from datetime import date, timedelta
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from config import MB, WorkloadConfig
from database.models import (
    BodyPart, EventKind, Modality, PatientSex, QuerySpec, SessionLabel,
    StudyRecord, TraceEvent, UsagePattern, date_to_timestamp,
)
from database.repository_service import RepositoryIndex

logger = logging.getLogger(__name__)

MODALITY_BODY_PARTS = {
    "CT": ("HEAD", "CHEST", "ABDOMEN", "PELVIS", "SPINE"),
    "MR": ("HEAD", "SPINE", "EXTREMITY", "ABDOMEN"),
    "CR": ("CHEST", "EXTREMITY", "SPINE", "PELVIS"),
    "DX": ("CHEST", "EXTREMITY", "SPINE", "PELVIS"),
    "US": ("ABDOMEN", "PELVIS", "HEART"),
    "XA": ("HEART", "HEAD"),
    "MG": ("BREAST",),
    "NM": ("HEART", "CHEST"),
    "PT": ("CHEST", "ABDOMEN", "HEAD"),
}

MAX_ATTEMPTS = 8
SESSION_GAP_S = 120
FIRST_RETRIEVE_DELAY_S = (10, 90)
RETRIEVE_SPACING_S = (30, 240)
LAST_SESSION_START_S = 22 * 3600


@dataclass
class GeneratedWorkload:
    index: RepositoryIndex
    events: List[TraceEvent]
    labels: List[SessionLabel]

    @property
    def query_count(self) -> int:
        return sum(1 for e in self.events if e.is_query)

    @property
    def retrieve_count(self) -> int:
        return sum(1 for e in self.events if e.is_retrieve)


@dataclass
class _Session:
    start: int
    aetitle: str
    day: date
    pattern: UsagePattern
    query: Optional[QuerySpec] = None
    retrieves: Tuple[Tuple[int, str], ...] = ()


class WorkloadGenerator:
    """Builds one deterministic workload from a WorkloadConfig"""

    def __init__(self, cfg: WorkloadConfig):
        cfg.validate()
        self.cfg = cfg
        self.rng = np.random.default_rng(cfg.seed)
        self.start = date.fromisoformat(cfg.start_date)
        self.modalities = sorted(cfg.modality_mix)
        self.workstations = [f"WS{i + 1}" for i in range(cfg.n_workstations)]
        self.institutions = [f"I{i + 1:02d}" for i in range(cfg.n_institutions)]

    def generate(self) -> GeneratedWorkload:
        records = self._make_studies()
        index = RepositoryIndex(records)
        self._prepare_lookups(records)

        sessions = self._schedule_sessions()
        for session in sessions:
            self._realize(session)

        events, labels = self._emit(sessions)
        logger.info(
            f"Generated {len(records)} studies ({index.total_bytes} bytes), "
            f"{len(sessions)} sessions, {len(events)} events"
        )
        return GeneratedWorkload(index=index, events=events, labels=labels)

    # Repository -----------------------------------------------------------

    def _zipf_weights(self, n: int) -> np.ndarray:
        ranks = self.rng.permutation(n) + 1
        weights = ranks.astype(float) ** -self.cfg.working_set_skew
        return weights / weights.sum()

    def _make_studies(self) -> List[StudyRecord]:
        cfg = self.cfg
        rng = self.rng
        n_patients = cfg.patient_count
        end = self.start + timedelta(days=cfg.duration_days)

        patient_weights = self._zipf_weights(n_patients)
        sexes = rng.choice(["M", "F", "O"], size=n_patients, p=[0.49, 0.49, 0.02])
        ages_days = rng.uniform(0.5 * 365.25, 95 * 365.25, size=n_patients).astype(int)

        mix = np.array([cfg.modality_mix[m] for m in self.modalities], dtype=float)
        mix /= mix.sum()
        inst_weights = 0.5 ** np.arange(len(self.institutions))
        inst_weights /= inst_weights.sum()

        n = cfg.n_studies
        owners = rng.choice(n_patients, size=n, p=patient_weights)
        modality_idx = rng.choice(len(self.modalities), size=n, p=mix)
        institution_idx = rng.choice(len(self.institutions), size=n, p=inst_weights)
        recent = rng.random(size=n) < cfg.recent_study_fraction
        recent_span = (end - self.start).days + 31
        old_span = max(1, cfg.history_days - 32)
        offsets = np.where(
            recent,
            rng.integers(0, recent_span, size=n) - 31,
            -32 - rng.integers(0, old_span, size=n),
        )
        part_draws = rng.random(size=n)

        raw_mb = np.empty(n)
        for i, m_idx in enumerate(modality_idx):
            modality = self.modalities[m_idx]
            raw_mb[i] = rng.lognormal(math.log(cfg.size_medians_mb[modality]), cfg.size_sigma)
        sizes = self._scale_sizes(raw_mb)

        study_dates = [self.start + timedelta(days=int(o)) for o in offsets]
        earliest: Dict[int, date] = {}
        for owner, d in zip(owners, study_dates):
            earliest[owner] = min(earliest.get(owner, d), d)

        records = []
        for i in range(n):
            owner = int(owners[i])
            modality = self.modalities[modality_idx[i]]
            parts = MODALITY_BODY_PARTS.get(modality, tuple(p.value for p in BodyPart.known()))
            birth = min(self.start - timedelta(days=int(ages_days[owner])), earliest[owner])
            records.append(StudyRecord(
                study_uid=f"S{i:06d}",
                patient_id=f"P{owner:05d}",
                patient_sex=PatientSex(str(sexes[owner])),
                patient_birth_date=birth,
                modality=Modality(modality),
                body_part=BodyPart(parts[int(part_draws[i] * len(parts))]),
                institution=self.institutions[institution_idx[i]],
                study_date=study_dates[i],
                size_bytes=int(sizes[i]),
                num_images=max(1, int(round(raw_mb[i] / cfg.image_size_mb[modality]))),
            ))
        return records

    def _scale_sizes(self, raw_mb: np.ndarray) -> np.ndarray:
        """Scale raw sizes so they sum exactly to total_repo_bytes"""
        total = self.cfg.total_repo_bytes
        raw_bytes = raw_mb * MB
        sizes = np.maximum(1, np.floor(raw_bytes * (total / raw_bytes.sum()))).astype(np.int64)
        residual = total - int(sizes.sum())
        largest = int(np.argmax(sizes))
        if sizes[largest] + residual > 0:
            sizes[largest] += residual
        return sizes

    def _prepare_lookups(self, records: Sequence[StudyRecord]) -> None:
        self.study_weight = dict(zip((r.study_uid for r in records), self._zipf_weights(len(records))))
        self.by_patient: Dict[str, List[StudyRecord]] = {}
        self.by_modality: Dict[str, List[StudyRecord]] = {}
        self.by_institution: Dict[str, List[StudyRecord]] = {}
        for record in sorted(records, key=lambda r: (r.study_date, r.study_uid)):
            self.by_patient.setdefault(record.patient_id, []).append(record)
            self.by_modality.setdefault(record.modality.value, []).append(record)
            self.by_institution.setdefault(record.institution, []).append(record)
        self.patient_ids = sorted(self.by_patient)
        self.patient_first = np.array([self.by_patient[p][0].study_date.toordinal() for p in self.patient_ids])
        self.patient_dates = {p: [r.study_date for r in self.by_patient[p]] for p in self.patient_ids}
        pop = np.array([sum(self.study_weight[r.study_uid] for r in self.by_patient[p]) for p in self.patient_ids])
        self.patient_pop = pop / pop.sum()

    # Sessions -------------------------------------------------------------

    def _schedule_sessions(self) -> List[_Session]:
        cfg = self.cfg
        rng = self.rng
        work_start, work_end = cfg.work_hours
        slots: List[Tuple[int, str, date]] = []

        for day_offset in range(cfg.duration_days):
            day = self.start + timedelta(days=day_offset)
            rate = cfg.session_rate_per_day * (cfg.weekend_factor if day.weekday() >= 5 else 1.0)
            n_sessions = int(rng.poisson(rate))
            stations = rng.integers(0, len(self.workstations), size=n_sessions)
            midnight = date_to_timestamp(day)
            for ws_idx, ws in enumerate(self.workstations):
                count = int(np.sum(stations == ws_idx))
                if count == 0:
                    continue
                offsets = np.sort(rng.integers(work_start * 3600, work_end * 3600, size=count))
                for offset in offsets:
                    slots.append((midnight + int(offset), ws, day))

        slots.sort(key=lambda s: (s[0], s[1]))
        patterns = self._assign_classes(len(slots))
        return [_Session(start=ts, aetitle=ws, day=day, pattern=p) for (ts, ws, day), p in zip(slots, patterns)]

    def _assign_classes(self, n: int) -> List[UsagePattern]:
        """Exact class proportions (largest remainder) in random order"""
        mix = np.array(self.cfg.class_mix, dtype=float)
        quotas = mix * n
        counts = np.floor(quotas).astype(int)
        for i in np.argsort(-(quotas - counts), kind="stable")[: n - int(counts.sum())]:
            counts[i] += 1
        classes = np.repeat(np.arange(1, 5), counts)
        return [UsagePattern(int(c)) for c in self.rng.permutation(classes)]

    def _draw_k(self) -> int:
        k_min, k_max, k_mean = self.cfg.retrieves_per_session
        return int(min(k_max, k_min + self.rng.poisson(k_mean - k_min)))

    def _realize(self, session: _Session) -> None:
        builders = {
            UsagePattern.PATIENT_REVISING: self._patient_session,
            UsagePattern.MODALITY_REVISING: self._modality_session,
            UsagePattern.OTHER: self._audit_session,
        }
        builder = builders.get(session.pattern)
        if builder is not None:
            for _ in range(MAX_ATTEMPTS):
                built = builder(session.day)
                if built is not None:
                    session.query, chosen = built
                    session.retrieves = self._timeline(session.start, chosen)
                    return
            logger.debug(f"Could not realize {session.pattern.name} on {session.day}; emitting a dead-end query")
            session.pattern = UsagePattern.INCONSEQUENT_QUERY
        session.query = self._inconsequent_query(session.day)

    def _timeline(self, start: int, uids: Sequence[str]) -> Tuple[Tuple[int, str], ...]:
        ts = start + int(self.rng.integers(*FIRST_RETRIEVE_DELAY_S))
        out = []
        for i, uid in enumerate(uids):
            if i:
                ts += int(self.rng.integers(*RETRIEVE_SPACING_S))
            out.append((ts, uid))
        return tuple(out)

    def _pick_patient(self, day: date) -> Optional[str]:
        ordinal = day.toordinal()
        eligible = self.patient_first <= ordinal
        if self.rng.random() < self.cfg.recent_patient_bias:
            recent = np.array([
                bool(eligible[i]) and self._has_study_between(p, day - timedelta(days=6), day)
                for i, p in enumerate(self.patient_ids)
            ])
            if recent.any():
                eligible = recent
        if not eligible.any():
            return None
        weights = np.where(eligible, self.patient_pop, 0.0)
        return self.patient_ids[int(self.rng.choice(len(self.patient_ids), p=weights / weights.sum()))]

    def _has_study_between(self, patient_id: str, start: date, end: date) -> bool:
        dates = self.patient_dates[patient_id]
        hi = bisect_right(dates, end)
        return hi > 0 and dates[hi - 1] >= start

    def _patient_session(self, day: date):
        patient_id = self._pick_patient(day)
        if patient_id is None:
            return None
        available = [r for r in self.by_patient[patient_id] if r.study_date <= day]
        newest_first = available[::-1]
        k = min(self._draw_k(), len(newest_first))
        weights = 1.0 / (1.0 + np.arange(len(newest_first)))
        picks = self.rng.choice(len(newest_first), size=k, replace=False, p=weights / weights.sum())
        return QuerySpec(patient_id=patient_id), [newest_first[int(i)].study_uid for i in picks]

    def _window_sample(self, pool: List[StudyRecord], k: int, need_modalities: int):
        if len(pool) < 2:
            return None
        k = max(2, min(k, len(pool)))
        weights = np.array([self.study_weight[r.study_uid] for r in pool])
        picks = self.rng.choice(len(pool), size=k, replace=False, p=weights / weights.sum())
        chosen = [pool[int(i)] for i in picks]
        if len({r.patient_id for r in chosen}) < 2 or len({r.modality for r in chosen}) < need_modalities:
            return None
        return [r.study_uid for r in chosen]

    def _modality_session(self, day: date):
        mix = np.array([self.cfg.modality_mix[m] for m in self.modalities], dtype=float)
        modality = self.modalities[int(self.rng.choice(len(self.modalities), p=mix / mix.sum()))]
        window = (day - timedelta(days=31), day)
        pool = [r for r in self.by_modality.get(modality, []) if window[0] <= r.study_date <= window[1]]
        uids = self._window_sample(pool, self._draw_k(), need_modalities=1)
        if uids is None:
            return None
        return QuerySpec(modality=Modality(modality), study_date_range=window), uids

    def _audit_session(self, day: date):
        institution = self.institutions[int(self.rng.integers(len(self.institutions)))]
        window = (day - timedelta(days=int(self.rng.integers(7, 32))), day)
        pool = [r for r in self.by_institution.get(institution, []) if window[0] <= r.study_date <= window[1]]
        uids = self._window_sample(pool, self._draw_k(), need_modalities=2)
        if uids is None:
            return None
        return QuerySpec(institution=institution, study_date_range=window), uids

    def _inconsequent_query(self, day: date) -> QuerySpec:
        draw = self.rng.random()
        if draw < 0.4:
            body_part = BodyPart.known()[int(self.rng.integers(len(BodyPart.known())))]
            return QuerySpec(body_part=body_part)
        if draw < 0.7:
            patient_id = self._pick_patient(day) or self.patient_ids[0]
            return QuerySpec(patient_id=patient_id)
        modality = self.modalities[int(self.rng.integers(len(self.modalities)))]
        return QuerySpec(modality=Modality(modality), study_date_range=(day - timedelta(days=31), day))

    # Output ---------------------------------------------------------------

    def _emit(self, sessions: List[_Session]) -> Tuple[List[TraceEvent], List[SessionLabel]]:
        """Enforce per-workstation non-overlap, assign query ids, interleave events"""
        tagged: List[Tuple[int, str, int, TraceEvent]] = []
        labels: List[SessionLabel] = []
        busy_until: Dict[str, int] = {}
        kept: List[_Session] = []

        for session in sessions:
            earliest = busy_until.get(session.aetitle, 0) + SESSION_GAP_S
            shift = max(0, earliest - session.start)
            start = session.start + shift
            if start - date_to_timestamp(session.day) > LAST_SESSION_START_S:
                continue
            session.start = start
            session.retrieves = tuple((ts + shift, uid) for ts, uid in session.retrieves)
            busy_until[session.aetitle] = session.retrieves[-1][0] if session.retrieves else start
            kept.append(session)

        kept.sort(key=lambda s: (s.start, s.aetitle))
        for qid, session in enumerate(kept):
            labels.append(SessionLabel(query_id=qid, pattern=session.pattern))
            tagged.append((session.start, session.aetitle, 0, TraceEvent(
                timestamp=session.start, aetitle=session.aetitle, kind=EventKind.QUERY,
                query=session.query, query_id=qid,
            )))
            for seq, (ts, uid) in enumerate(session.retrieves, start=1):
                tagged.append((ts, session.aetitle, seq, TraceEvent(
                    timestamp=ts, aetitle=session.aetitle, kind=EventKind.RETRIEVE,
                    study_uid=uid, query_id=qid,
                )))

        tagged.sort(key=lambda t: (t[0], t[1], t[2]))
        return [t[3] for t in tagged], labels


def generate_workload(cfg: WorkloadConfig) -> Tuple[RepositoryIndex, List[TraceEvent]]:
    """Repository index and trace for cfg (ground-truth labels via WorkloadGenerator)"""
    workload = WorkloadGenerator(cfg).generate()
    return workload.index, workload.events
