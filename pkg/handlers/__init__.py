# Handlers package

from .command_handler import cmd_generate, cmd_report, cmd_simulate
from .decorators import handle_errors
from .report_handler import aggregate, compare, load_experiment_table, write_report

__all__ = [
    'cmd_generate', 'cmd_report', 'cmd_simulate', 'handle_errors',
    'aggregate', 'compare', 'load_experiment_table', 'write_report',
]
