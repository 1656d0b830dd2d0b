#!/usr/bin/env python3
"""
WAN link between the gateway and the cloud archive

A single simpy PriorityResource of capacity one: transfers run one at a time,
demand fetches (priority 0) overtake queued prefetches (priority 1) but never
interrupt the transfer in progress.
"""

import logging
from dataclasses import dataclass
from enum import IntEnum
from typing import Callable, Dict, Optional

import simpy

from cache.study_cache import CacheOrigin
from config import NetworkModel
from database.models import StudyRecord
from sensors.network_sensor import LinkBusyLog

logger = logging.getLogger(__name__)


class Priority(IntEnum):
    DEMAND = 0
    PREFETCH = 1


@dataclass
class Transfer:
    study: StudyRecord
    priority: Priority
    origin: CacheOrigin
    requested_at: float
    done: simpy.Event
    cancelled: bool = False
    started_at: Optional[float] = None
    finished_at: Optional[float] = None

    @property
    def study_uid(self) -> str:
        return self.study.study_uid

    @property
    def started(self) -> bool:
        return self.started_at is not None


class WanLink:
    """Serial link with per-transfer association overhead"""

    def __init__(self, env: simpy.Environment, network: NetworkModel,
                 busy_log: Optional[LinkBusyLog] = None,
                 on_complete: Optional[Callable[[Transfer], None]] = None):
        self.env = env
        self.network = network
        self.busy_log = busy_log or LinkBusyLog()
        self.on_complete = on_complete
        self.resource = simpy.PriorityResource(env, capacity=1)
        self.in_flight: Dict[str, Transfer] = {}
        self.completed = 0
        self.cancelled = 0

    def submit(self, study: StudyRecord, priority: Priority, origin: CacheOrigin) -> Transfer:
        transfer = Transfer(study=study, priority=priority, origin=origin,
                            requested_at=self.env.now, done=self.env.event())
        self.in_flight[study.study_uid] = transfer
        self.env.process(self._run(transfer))
        return transfer

    def cancel(self, study_uid: str) -> bool:
        """Cancel a transfer that has not started yet"""
        transfer = self.in_flight.get(study_uid)
        if transfer is None or transfer.started:
            return False
        transfer.cancelled = True
        del self.in_flight[study_uid]
        self.cancelled += 1
        return True

    def pending_prefetches(self) -> int:
        return sum(1 for t in self.in_flight.values() if t.priority is Priority.PREFETCH)

    def _run(self, transfer: Transfer):
        with self.resource.request(priority=int(transfer.priority)) as request:
            yield request
            if transfer.cancelled:
                transfer.done.succeed(transfer)
                return
            transfer.started_at = self.env.now
            self.busy_log.begin(self.env.now)
            yield self.env.timeout(self.network.wan_time(transfer.study.size_bytes))
            self.busy_log.end(self.env.now)
            transfer.finished_at = self.env.now

        if self.in_flight.get(transfer.study_uid) is transfer:
            del self.in_flight[transfer.study_uid]
        self.completed += 1
        if self.on_complete is not None:
            self.on_complete(transfer)
        transfer.done.succeed(transfer)
