#!/usr/bin/env python3
"""
Message sensor: one log record per message exchanged through the gateway
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

from database.models import TraceEvent
from utils.jsonl import dumps_line

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class LogRecord:
    timestamp: int
    kind: str
    requesting_ae: str
    destination_ae: str
    query: Optional[Dict[str, Any]] = None
    study_uid: Optional[str] = None
    matched_uids: Optional[Tuple[str, ...]] = None
    query_id: Optional[int] = None

    def to_dict(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {
            'ts': self.timestamp,
            'kind': self.kind,
            'from': self.requesting_ae,
            'to': self.destination_ae,
        }
        if self.query is not None:
            data['q'] = self.query
        if self.study_uid is not None:
            data['uid'] = self.study_uid
        if self.matched_uids is not None:
            data['matches'] = list(self.matched_uids)
        if self.query_id is not None:
            data['qid'] = self.query_id
        return data


def message_sensor_record(event: TraceEvent, response_meta: Optional[Sequence[str]] = None,
                          destination_ae: str = "GATEWAY") -> LogRecord:
    """Log record for one request; a query's response contributes its matched uids"""
    return LogRecord(
        timestamp=event.timestamp,
        kind=event.kind.value,
        requesting_ae=event.aetitle,
        destination_ae=destination_ae,
        query=event.query.to_dict() if event.is_query and event.query is not None else None,
        study_uid=event.study_uid if event.is_retrieve else None,
        matched_uids=tuple(response_meta) if event.is_query and response_meta is not None else None,
        query_id=event.query_id,
    )


class MessageSensor:
    """Append-only message log, optionally streamed to a JSON Lines file"""

    def __init__(self, gateway_ae: str = "GATEWAY", path: Optional[Union[str, Path]] = None,
                 keep_in_memory: bool = True):
        self.gateway_ae = gateway_ae
        self.keep_in_memory = keep_in_memory
        self.records: List[LogRecord] = []
        self.count = 0
        self._file = None
        if path is not None:
            Path(path).parent.mkdir(parents=True, exist_ok=True)
            self._file = open(path, "w", encoding="utf-8", newline="\n")

    def record(self, event: TraceEvent, response_meta: Optional[Sequence[str]] = None) -> LogRecord:
        record = message_sensor_record(event, response_meta, self.gateway_ae)
        self.count += 1
        if self.keep_in_memory:
            self.records.append(record)
        if self._file is not None:
            self._file.write(dumps_line(record.to_dict()) + "\n")
        return record

    def __len__(self) -> int:
        return self.count

    def close(self) -> None:
        if self._file is not None:
            self._file.close()
            self._file = None
