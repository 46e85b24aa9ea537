"""
Logger utility for the EVM clone detector.

Provides a consistent logging interface across all components. Console output
goes to stderr so that reports printed on stdout stay machine-readable.
"""

import logging
import os
import sys
from datetime import datetime
from typing import Optional


def level_from_env(default: int = logging.INFO) -> int:
    """Resolve the log level from the LOG_LEVEL environment variable."""
    value = os.environ.get("LOG_LEVEL")
    if not value:
        return default
    level = logging.getLevelName(value.strip().upper())
    return level if isinstance(level, int) else default


def setup_logger(name: str, log_level: Optional[int] = None, log_dir: Optional[str] = None) -> logging.Logger:
    """
    Set up a logger with a stderr handler and an optional file handler.

    Args:
        name: Name of the logger
        log_level: Logging level (defaults to LOG_LEVEL env var, then INFO)
        log_dir: Directory for a daily log file (defaults to EVMCD_LOG_DIR env var)

    Returns:
        Configured logger instance
    """
    logger = logging.getLogger(name)
    logger.setLevel(log_level if log_level is not None else level_from_env())

    # Avoid duplicate handlers
    if logger.handlers:
        return logger

    formatter = logging.Formatter('%(asctime)s - %(name)s - %(levelname)s - %(message)s')

    console_handler = logging.StreamHandler(sys.stderr)
    console_handler.setFormatter(formatter)
    logger.addHandler(console_handler)

    log_dir = log_dir or os.environ.get("EVMCD_LOG_DIR")
    if log_dir:
        os.makedirs(log_dir, exist_ok=True)
        log_file = os.path.join(log_dir, f"evm_clone_detector_{datetime.now().strftime('%Y%m%d')}.log")
        file_handler = logging.FileHandler(log_file)
        file_handler.setFormatter(formatter)
        logger.addHandler(file_handler)

    # Handlers are attached per module logger; do not duplicate through root
    logger.propagate = False
    return logger


def set_global_level(log_level: int) -> None:
    """Change the level of every logger created through setup_logger."""
    for logger_name in list(logging.Logger.manager.loggerDict):
        if logger_name.startswith("evm_clone_detector"):
            logging.getLogger(logger_name).setLevel(log_level)


class Logger:
    """Logger class that provides a consistent interface for logging."""

    def __init__(self, name: str, log_level: Optional[int] = None, log_dir: Optional[str] = None):
        """
        Initialize the logger.

        Args:
            name: Name of the logger
            log_level: Logging level
            log_dir: Optional directory for file logging
        """
        self.logger = setup_logger(name, log_level, log_dir)

    def debug(self, message: str, *args, **kwargs) -> None:
        """Log a debug message."""
        self.logger.debug(message, *args, **kwargs)

    def info(self, message: str, *args, **kwargs) -> None:
        """Log an info message."""
        self.logger.info(message, *args, **kwargs)

    def warning(self, message: str, *args, **kwargs) -> None:
        """Log a warning message."""
        self.logger.warning(message, *args, **kwargs)

    def error(self, message: str, *args, **kwargs) -> None:
        """Log an error message."""
        self.logger.error(message, *args, **kwargs)

    def exception(self, message: str, *args, **kwargs) -> None:
        """Log an exception message with traceback."""
        self.logger.exception(message, *args, **kwargs)
