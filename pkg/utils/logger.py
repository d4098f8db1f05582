"""
Logging utilities for manigp.
"""

import logging
import sys
from datetime import datetime
from pathlib import Path
from typing import Callable, Optional


class RunStats:
    """Track progress of a long run (experiment cells, MCMC iterations)."""

    def __init__(self):
        self.reset()

    def reset(self):
        self.start_time: Optional[datetime] = None
        self.end_time: Optional[datetime] = None
        self.total_units: int = 0
        self.completed_units: int = 0
        self.errors: list[str] = []

    def start(self, total_units: int):
        self.reset()
        self.start_time = datetime.now()
        self.total_units = total_units

    def update(self, completed: int):
        self.completed_units = completed

    def finish(self):
        self.end_time = datetime.now()

    def add_error(self, error: str):
        self.errors.append(error)

    @property
    def duration(self) -> float:
        """Get run duration in seconds."""
        if not self.start_time:
            return 0
        end = self.end_time or datetime.now()
        return (end - self.start_time).total_seconds()

    @property
    def rate(self) -> float:
        """Completed units per second."""
        if self.duration == 0:
            return 0
        return self.completed_units / self.duration

    @property
    def eta_seconds(self) -> float:
        """Estimated time remaining in seconds."""
        if self.completed_units == 0 or self.rate == 0:
            return 0
        remaining = self.total_units - self.completed_units
        return remaining / self.rate

    @property
    def progress(self) -> float:
        """Get progress as percentage (0-100)."""
        if self.total_units == 0:
            return 0
        return (self.completed_units / self.total_units) * 100


class AppLogger:
    """Application logger with an optional status callback."""

    def __init__(self, name: str = "manigp"):
        self.logger = logging.getLogger(name)
        self.logger.setLevel(logging.DEBUG)
        self.logger.propagate = False

        # Console handler; stdout is reserved for JSON documents
        self._console_handler = logging.StreamHandler(sys.stderr)
        self._console_handler.setLevel(logging.INFO)
        console_format = logging.Formatter('%(asctime)s - %(levelname)s - %(message)s')
        self._console_handler.setFormatter(console_format)
        self.logger.addHandler(self._console_handler)

        self._file_handler: Optional[logging.Handler] = None

        # Status callback, receives (level, message)
        self._status_callback: Optional[Callable[[str, str], None]] = None

    def enable_file_logging(self, log_dir: Optional[Path] = None):
        """Add a daily log file under ~/.manigp/logs (optional)."""
        if self._file_handler is not None:
            return
        try:
            log_dir = log_dir or Path.home() / ".manigp" / "logs"
            log_dir.mkdir(parents=True, exist_ok=True)
            log_file = log_dir / f"manigp_{datetime.now().strftime('%Y%m%d')}.log"

            file_handler = logging.FileHandler(log_file, encoding='utf-8')
            file_handler.setLevel(logging.DEBUG)
            file_format = logging.Formatter('%(asctime)s - %(name)s - %(levelname)s - %(message)s')
            file_handler.setFormatter(file_format)
            self.logger.addHandler(file_handler)
            self._file_handler = file_handler
        except Exception:
            pass  # File logging is optional

    def set_level(self, level: str):
        """Set console verbosity ("DEBUG", "INFO", "WARNING", "ERROR")."""
        self._console_handler.setLevel(getattr(logging, level.upper(), logging.INFO))

    def set_status_callback(self, callback: Optional[Callable[[str, str], None]]):
        """Set callback for status updates. Callback receives (level, message)."""
        self._status_callback = callback

    def _notify(self, level: str, message: str):
        if self._status_callback:
            try:
                self._status_callback(level, message)
            except Exception:
                pass

    def debug(self, message: str):
        self.logger.debug(message)

    def info(self, message: str):
        self.logger.info(message)
        self._notify("INFO", message)

    def warning(self, message: str):
        self.logger.warning(message)
        self._notify("WARNING", message)

    def error(self, message: str):
        self.logger.error(message)
        self._notify("ERROR", message)

    def success(self, message: str):
        self.logger.info(message)
        self._notify("SUCCESS", message)


# Global logger instance
logger = AppLogger()
