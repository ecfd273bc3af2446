"""
Logging configuration for the channel semantics toolkit
"""
import os
import logging
import sys
from pathlib import Path
from typing import Any, Dict, Optional


def setup_logging(log_level: Optional[str] = None) -> logging.Logger:
    """Set up console logging (stderr) plus an optional log file.

    stdout is left alone because `query` prints its records there.
    """
    level_name = (log_level or os.getenv('CHANSEM_LOG', 'INFO')).upper()
    handlers = [logging.StreamHandler(sys.stderr)]

    log_file = os.getenv('CHANSEM_LOG_FILE', '')
    if log_file:
        Path(log_file).parent.mkdir(parents=True, exist_ok=True)
        handlers.append(logging.FileHandler(log_file))

    logging.basicConfig(
        level=getattr(logging, level_name, logging.INFO),
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        handlers=handlers,
        force=True  # Override any existing configuration
    )

    logger = logging.getLogger("chansem")
    logger.debug(f"Logging at {level_name}" +
                 (f", also to {log_file}" if log_file else ""))
    return logger


def progress_enabled() -> bool:
    """Progress bars only for interactive runs at INFO or more verbose"""
    return sys.stderr.isatty() and logging.getLogger().getEffectiveLevel() <= logging.INFO


def log_error(logger: logging.Logger, error: Exception, context: Dict[str, Any] = None) -> None:
    """Log errors with context"""
    logger.error(f"Error: {error} | Context: {context or {}}", exc_info=True)
