####################################################################################################
# Helpers that import nothing from mvs_core
####################################################################################################
import logging
from contextlib import contextmanager
from typing import Iterator


@contextmanager
def disable_console_logging(logger_name: str) -> Iterator[None]:
    """Silence the console handlers of `logger_name` for the duration of the block.

    mcli wraps commands that print tables or configuration to stdout in this, so log lines do not
    interleave with the output. File handlers keep logging.
    """
    target = logging.getLogger(logger_name)
    saved = (target.handlers[:], target.propagate)

    # FileHandler is a StreamHandler subclass, so compare exact types
    target.handlers = [h for h in target.handlers if type(h) is not logging.StreamHandler]
    target.propagate = False
    try:
        yield
    finally:
        target.handlers, target.propagate = saved
