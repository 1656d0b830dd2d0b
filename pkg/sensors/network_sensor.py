#!/usr/bin/env python3
"""
Network sensor: utilization of the WAN link over a trailing window

The sensor observes the simulated link directly. Busy periods are kept as
merged, sorted intervals; a transfer in progress counts as busy up to now.
"""

import bisect
import logging
from dataclasses import dataclass
from typing import List, Optional, Tuple

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class NetworkSample:
    window_start: float
    window_end: float
    busy_seconds: float
    utilization: float


class LinkBusyLog:
    """Merged busy intervals of one link"""

    def __init__(self):
        self.intervals: List[Tuple[float, float]] = []
        self.open_since: Optional[float] = None

    def begin(self, now: float) -> None:
        if self.open_since is None:
            self.open_since = now

    def end(self, now: float) -> None:
        if self.open_since is not None:
            self.add_interval(self.open_since, now)
            self.open_since = None

    def add_interval(self, start: float, end: float) -> None:
        if end <= start:
            return
        pos = bisect.bisect_left(self.intervals, (start, end))
        self.intervals.insert(pos, (start, end))
        merged: List[Tuple[float, float]] = []
        lo = max(0, pos - 1)
        for s, e in self.intervals[lo:]:
            if merged and s <= merged[-1][1]:
                merged[-1] = (merged[-1][0], max(merged[-1][1], e))
            else:
                merged.append((s, e))
        self.intervals[lo:] = merged

    def busy_seconds(self, window_start: float, window_end: float) -> float:
        busy = 0.0
        for s, e in reversed(self.intervals):
            if e <= window_start:
                break
            busy += max(0.0, min(e, window_end) - max(s, window_start))
        if self.open_since is not None:
            busy += max(0.0, window_end - max(self.open_since, window_start))
        return busy

    def prune(self, before: float) -> None:
        """Forget intervals that ended before the given time"""
        keep = bisect.bisect_left([e for _, e in self.intervals], before)
        if keep:
            del self.intervals[:keep]


def sample_network(link_busy_log: LinkBusyLog, now: float, window_seconds: float) -> NetworkSample:
    if window_seconds <= 0:
        raise ValueError(f"window_seconds must be positive, got {window_seconds}")
    start = now - window_seconds
    busy = link_busy_log.busy_seconds(start, now)
    utilization = min(1.0, max(0.0, busy / window_seconds))
    return NetworkSample(window_start=start, window_end=now, busy_seconds=busy, utilization=utilization)


def network_utilization(link_busy_log: LinkBusyLog, now: float, window_seconds: float) -> float:
    """Fraction of the trailing window the link spent transferring"""
    return sample_network(link_busy_log, now, window_seconds).utilization


def is_idle(utilization: float, threshold: float) -> bool:
    return utilization < threshold
