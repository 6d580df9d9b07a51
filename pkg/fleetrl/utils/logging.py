"""Logging configuration for fleetrl.

Library modules only ever call ``logging.getLogger(__name__)``; handlers are
attached here, once, by the CLI or by an embedding application.

Two output formats are supported:
- text lines for interactive runs
- JSON lines for long simulations whose logs are post-processed
"""

import json
import logging
import os
import sys
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Optional, Union

TEXT_FORMAT = "%(asctime)s | %(levelname)-8s | %(name)s | %(message)s"
DATE_FORMAT = "%Y-%m-%d %H:%M:%S"

# Set to "1" to make the CLI emit JSON lines
JSON_ENV_VAR = "FLEETRL_LOG_JSON"

_RESERVED_ATTRS = frozenset(
    (
        "name", "msg", "args", "created", "filename", "funcName",
        "levelname", "levelno", "lineno", "module", "msecs",
        "pathname", "process", "processName", "relativeCreated",
        "stack_info", "exc_info", "exc_text", "thread", "threadName",
        "message", "taskName",
    )
)


def _jsonable(value: Any) -> Any:
    """Coerce numpy scalars/arrays and paths into JSON-friendly values."""
    if hasattr(value, "tolist"):
        return value.tolist()
    if isinstance(value, Path):
        return str(value)
    json.dumps(value)
    return value


class JsonFormatter(logging.Formatter):
    """Format log records as single-line JSON objects.

    Fields passed through ``extra=`` (tick, agent, residual, ...) are copied
    into the object so telemetry-style lines stay machine readable.
    """

    def format(self, record: logging.LogRecord) -> str:
        log_data = {
            "timestamp": datetime.fromtimestamp(record.created, tz=timezone.utc)
            .isoformat()
            .replace("+00:00", "Z"),
            "level": record.levelname,
            "logger": record.name,
            "message": record.getMessage(),
        }

        if record.exc_info:
            log_data["exception"] = self.formatException(record.exc_info)

        for key, value in record.__dict__.items():
            if key in _RESERVED_ATTRS:
                continue
            try:
                log_data[key] = _jsonable(value)
            except (TypeError, ValueError):
                log_data[key] = str(value)

        return json.dumps(log_data)


def _resolve_level(level: Union[int, str]) -> int:
    if isinstance(level, str):
        return getattr(logging, level.upper(), logging.INFO)
    return level


def _build_formatter(json_output: bool) -> logging.Formatter:
    if json_output:
        return JsonFormatter()
    return logging.Formatter(TEXT_FORMAT, DATE_FORMAT)


def json_logging_requested() -> bool:
    """Return True when the environment asks for JSON log lines."""
    return os.environ.get(JSON_ENV_VAR, "").strip().lower() in ("1", "true", "yes")


def get_logger(
    name: str,
    level: Union[int, str] = logging.INFO,
    json_output: bool = False,
    log_file: Optional[Path] = None,
    console: bool = True,
) -> logging.Logger:
    """Get a logger with its own handlers attached.

    Meant for scripts that embed fleetrl without calling
    ``configure_root_logger``. Calling it twice for the same name returns
    the already-configured logger.

    Args:
        name: Logger name, usually a module path such as ``fleetrl.sim``
        level: Logging level as int or name
        json_output: Emit JSON lines instead of text
        log_file: Optional file to append to
        console: Also log to stderr

    Returns:
        Configured logger instance

    Example:
        >>> log = get_logger("fleetrl.sim", json_output=True)
        >>> log.info("tick done", extra={"tick": 12, "revenue": 41.5})
    """
    logger = logging.getLogger(name)
    if logger.handlers:
        return logger

    level = _resolve_level(level)
    logger.setLevel(level)
    formatter = _build_formatter(json_output)

    if console:
        console_handler = logging.StreamHandler(sys.stderr)
        console_handler.setLevel(level)
        console_handler.setFormatter(formatter)
        logger.addHandler(console_handler)

    if log_file:
        log_file = Path(log_file)
        log_file.parent.mkdir(parents=True, exist_ok=True)
        file_handler = logging.FileHandler(log_file, encoding="utf-8")
        file_handler.setLevel(level)
        file_handler.setFormatter(formatter)
        logger.addHandler(file_handler)

    return logger


def configure_root_logger(
    level: Union[int, str] = logging.INFO,
    json_output: Optional[bool] = None,
    log_file: Optional[Path] = None,
) -> None:
    """Configure the root logger for the whole process.

    Args:
        level: Default logging level
        json_output: JSON lines if True; None defers to FLEETRL_LOG_JSON
        log_file: Optional path to a log file
    """
    if json_output is None:
        json_output = json_logging_requested()

    root_logger = logging.getLogger()
    level = _resolve_level(level)
    root_logger.setLevel(level)
    root_logger.handlers.clear()

    formatter = _build_formatter(json_output)

    console_handler = logging.StreamHandler(sys.stderr)
    console_handler.setLevel(level)
    console_handler.setFormatter(formatter)
    root_logger.addHandler(console_handler)

    if log_file:
        log_file = Path(log_file)
        log_file.parent.mkdir(parents=True, exist_ok=True)
        file_handler = logging.FileHandler(log_file, encoding="utf-8")
        file_handler.setLevel(level)
        file_handler.setFormatter(formatter)
        root_logger.addHandler(file_handler)
