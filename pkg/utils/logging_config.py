#!/usr/bin/env python3
"""
Logging configuration for the gateway simulator
"""

import logging
import sys
from pathlib import Path
from typing import Optional, Union


def setup_logging(log_level: str = "INFO", debug: bool = False,
                  log_file: Optional[Union[str, Path]] = None) -> None:
    """Setup logging configuration"""

    numeric_level = getattr(logging, log_level.upper(), logging.INFO)

    if debug:
        formatter = logging.Formatter(
            '%(asctime)s - %(name)s - %(levelname)s - %(filename)s:%(lineno)d - %(message)s'
        )
    else:
        formatter = logging.Formatter(
            '%(asctime)s - %(levelname)s - %(message)s'
        )

    root_logger = logging.getLogger()
    root_logger.setLevel(numeric_level)

    # Repeated CLI invocations in one process (tests) must not stack handlers
    for handler in list(root_logger.handlers):
        if getattr(handler, "_gateway_handler", False):
            root_logger.removeHandler(handler)
            handler.close()

    console_handler = logging.StreamHandler(sys.stdout)
    console_handler.setFormatter(formatter)
    console_handler._gateway_handler = True
    root_logger.addHandler(console_handler)

    if log_file is not None:
        Path(log_file).parent.mkdir(parents=True, exist_ok=True)
        file_handler = logging.FileHandler(str(log_file), encoding='utf-8')
        file_handler.setFormatter(formatter)
        file_handler._gateway_handler = True
        root_logger.addHandler(file_handler)

    # Reduce noise from external libraries
    logging.getLogger('numexpr').setLevel(logging.WARNING)
