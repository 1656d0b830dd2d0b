"""Discrete-event replay of a trace through the gateway, and experiment sweeps"""

from .engine import DayMetrics, GatewaySimulator, RunArtifacts, SimReport, run_simulation
from .experiment import CSV_COLUMNS, ExperimentReport, derive_seeds, run_experiment, summarize
from .network import Priority, Transfer, WanLink

__all__ = [
    'DayMetrics', 'GatewaySimulator', 'RunArtifacts', 'SimReport', 'run_simulation',
    'CSV_COLUMNS', 'ExperimentReport', 'derive_seeds', 'run_experiment', 'summarize',
    'Priority', 'Transfer', 'WanLink',
]
