#!/usr/bin/env python3
"""
Error boundary for command handlers
"""

import logging
import sys
from functools import wraps

from errors import GatewayError

logger = logging.getLogger(__name__)


def handle_errors(func):
    """Turn a handler's exceptions into a categorized message and an exit code"""
    @wraps(func)
    def wrapper(*args, **kwargs) -> int:
        try:
            result = func(*args, **kwargs)
        except GatewayError as e:
            logger.error(f"{func.__name__} failed ({e.category}): {e}")
            print(f"error [{e.category}]: {e}", file=sys.stderr)
            return e.exit_code
        except KeyboardInterrupt:
            logger.warning(f"{func.__name__} interrupted")
            return 130
        except Exception as e:
            logger.exception(f"Unexpected error in {func.__name__}: {e}")
            print(f"error [internal]: {e}", file=sys.stderr)
            return 1
        return 0 if result is None else int(result)

    return wrapper
