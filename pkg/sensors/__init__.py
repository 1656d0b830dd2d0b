#!/usr/bin/env python3
"""
Sensors module: message log, study lookup and network utilization
"""

from .message_sensor import LogRecord, MessageSensor, message_sensor_record
from .network_sensor import LinkBusyLog, NetworkSample, is_idle, network_utilization, sample_network
from .study_sensor import StudySensor, study_sensor_lookup

__all__ = [
    'LogRecord', 'MessageSensor', 'message_sensor_record',
    'LinkBusyLog', 'NetworkSample', 'is_idle', 'network_utilization', 'sample_network',
    'StudySensor', 'study_sensor_lookup',
]
