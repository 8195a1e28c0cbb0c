"""
Logging setup for the CLI.

Log records go to stderr so stdout carries only the command's result record.
Long training runs can also keep a plain-text copy with --log-file.
"""

import logging
import sys
from pathlib import Path
from typing import Optional

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
DATE_FORMAT = '%Y-%m-%d %H:%M:%S'

# Libraries that log chatty INFO/DEBUG lines during plotting and training
QUIET_LIBRARIES = ('matplotlib', 'PIL', 'torch')


def _level(verbose: bool, quiet: bool) -> int:
    if verbose:
        return logging.DEBUG
    if quiet:
        return logging.WARNING
    return logging.INFO


def setup_logging(
    verbose: bool = False,
    quiet: bool = False,
    log_file: Optional[str] = None,
) -> None:
    """
    Configure the root logger for one CLI invocation.

    Args:
        verbose: DEBUG level, including per-step training losses
        quiet: WARNING level; ignored when verbose is set
        log_file: Also append every record to this file

    Python warnings (e.g. from torch) are routed through logging as well.

    Example:
        >>> setup_logging(verbose=True)
        >>> logging.getLogger("orderscout.trainer").debug("step 10: loss=1.23")
    """
    level = _level(verbose, quiet)
    formatter = logging.Formatter(fmt=LOG_FORMAT, datefmt=DATE_FORMAT)

    root_logger = logging.getLogger()
    root_logger.setLevel(level)
    for handler in root_logger.handlers:
        if isinstance(handler, logging.FileHandler):
            handler.close()
    root_logger.handlers.clear()

    stderr_handler = logging.StreamHandler(sys.stderr)
    stderr_handler.setLevel(level)
    stderr_handler.setFormatter(formatter)
    root_logger.addHandler(stderr_handler)

    if log_file:
        path = Path(log_file)
        path.parent.mkdir(parents=True, exist_ok=True)
        file_handler = logging.FileHandler(path, encoding='utf-8')
        file_handler.setLevel(level)
        file_handler.setFormatter(formatter)
        root_logger.addHandler(file_handler)

    logging.getLogger('orderscout').setLevel(level)
    for name in QUIET_LIBRARIES:
        logging.getLogger(name).setLevel(max(level, logging.WARNING))
    logging.captureWarnings(True)

    root_logger.debug(f"Logging at {logging.getLevelName(level)}"
                      + (f", copy in {log_file}" if log_file else ""))
