"""
Common utility functions for twoport_fit.
"""
import os
import logging
from typing import Optional

from twoport_fit.config.config_manager import ConfigManager


THREADS_ENV_VAR = 'TPF_THREADS'

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'


def ensure_dir(directory: str) -> None:
    """
    Ensure a directory exists, creating it if necessary.

    Args:
        directory: Path to the directory.
    """
    if directory and not os.path.exists(directory):
        os.makedirs(directory, exist_ok=True)


def resolve_threads(requested: Optional[int] = None, config: Optional[ConfigManager] = None) -> int:
    """
    Work out how many worker threads to use.

    The ``TPF_THREADS`` environment variable wins over ``requested``, which
    wins over the ``[RUNTIME] threads`` setting. Zero or a missing value
    means all available cores.

    Args:
        requested: Thread count from the command line.
        config: Configuration manager instance.

    Returns:
        A positive thread count.
    """
    env_value = os.environ.get(THREADS_ENV_VAR)
    if env_value:
        threads = int(env_value)
    elif requested:
        threads = requested
    elif config is not None:
        threads = config.getint('RUNTIME', 'threads', fallback=0)
    else:
        threads = 0

    if threads <= 0:
        threads = os.cpu_count() or 1
    return threads


def parse_length_counts(text: str) -> dict:
    """
    Parse a per-length count expression.

    Args:
        text: Expression such as "1:all,2:all,4:1120".

    Returns:
        Mapping of length to count, with None standing for "all".
    """
    counts = {}
    if not text:
        return counts

    for item in text.split(','):
        item = item.strip()
        if not item:
            continue
        length, _, count = item.partition(':')
        count = count.strip().lower()
        counts[int(length)] = None if count in ('all', '') else int(count)
    return counts


def setup_logger(name: str, log_file: Optional[str] = None, level: int = logging.INFO) -> logging.Logger:
    """
    Set up a logger.

    Args:
        name: Name of the logger.
        log_file: Path to the log file.
        level: Logging level.

    Returns:
        Logger instance.
    """
    logger = logging.getLogger(name)
    logger.setLevel(level)

    # Avoid stacking handlers when the CLI is invoked repeatedly in one process
    if logger.handlers:
        return logger

    formatter = logging.Formatter(LOG_FORMAT)

    console_handler = logging.StreamHandler()
    console_handler.setFormatter(formatter)
    logger.addHandler(console_handler)

    if log_file:
        ensure_dir(os.path.dirname(log_file))
        file_handler = logging.FileHandler(log_file)
        file_handler.setFormatter(formatter)
        logger.addHandler(file_handler)

    return logger
