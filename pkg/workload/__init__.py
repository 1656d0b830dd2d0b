#!/usr/bin/env python3
"""
Workload module: synthetic trace generation and trace file I/O
"""

from .generator import GeneratedWorkload, WorkloadGenerator, generate_workload
from .trace_io import (
    read_index, read_labels, read_trace, write_index, write_labels, write_trace,
)

__all__ = [
    'GeneratedWorkload', 'WorkloadGenerator', 'generate_workload',
    'read_index', 'read_labels', 'read_trace',
    'write_index', 'write_labels', 'write_trace',
]
