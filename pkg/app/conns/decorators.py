"""
Decorators shared by the command layer.
"""

import functools
import logging
import time
from typing import Any, Callable


def log_duration(logger: logging.Logger, label: str = "") -> Callable:
    """
    Decorator to log how long a call took, including failed calls.

    Args:
        logger: Logger instance for timing output.
        label: Name used in the log line, defaults to the function name.

    Returns:
        Decorated function with timing.
    """

    def decorator(func: Callable) -> Callable:
        name = label or func.__name__

        @functools.wraps(func)
        def wrapper(*args: Any, **kwargs: Any) -> Any:
            start = time.perf_counter()
            try:
                return func(*args, **kwargs)
            except Exception:
                logger.error("%s: failed after %.2f s", name, time.perf_counter() - start)
                raise
            finally:
                logger.debug("%s: finished in %.2f s", name, time.perf_counter() - start)

        return wrapper

    return decorator
