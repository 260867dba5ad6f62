"""Structured logging for gemrec runs (structlog over the stdlib root logger)."""

import logging
import sys
from pathlib import Path
from typing import Any, Optional

import numpy as np
import structlog
from structlog.types import EventDict, Processor


def coerce_numpy(_logger: Any, _method_name: str, event_dict: EventDict) -> EventDict:
    """Turn numpy scalars and arrays into plain Python values before rendering."""
    for key, value in event_dict.items():
        if isinstance(value, np.generic):
            event_dict[key] = value.item()
        elif isinstance(value, np.ndarray):
            event_dict[key] = value.tolist()
    return event_dict


def bind_run_context(command: str, seed: int, preset: str) -> None:
    """Attach the run's identity to every later log line of this process."""
    structlog.contextvars.clear_contextvars()
    structlog.contextvars.bind_contextvars(command=command, seed=seed, preset=preset)


def _handlers(level: int, log_file: Optional[Path]) -> list[logging.Handler]:
    # stdout carries decode responses; logs must stay off it.
    handlers: list[logging.Handler] = [logging.StreamHandler(sys.stderr)]
    if log_file:
        log_file.parent.mkdir(parents=True, exist_ok=True)
        handlers.append(logging.FileHandler(log_file, encoding="utf-8"))
    for handler in handlers:
        handler.setLevel(level)
    return handlers


def configure_logging(
    log_level: str = "WARNING",
    log_file: Optional[Path] = None,
    json_logs: bool = False,
) -> None:
    """
    Configure structlog for one CLI invocation.

    Args:
        log_level: Logging level (DEBUG, INFO, WARNING, ERROR, CRITICAL)
        log_file: Optional file that receives the same lines as stderr
        json_logs: Render one sorted-key JSON object per line instead of console text
    """
    level = logging.getLevelName(log_level.upper())
    logging.basicConfig(
        format="%(message)s", level=level, handlers=_handlers(level, log_file), force=True
    )

    processors: list[Processor] = [
        structlog.contextvars.merge_contextvars,
        structlog.stdlib.filter_by_level,
        structlog.stdlib.add_logger_name,
        structlog.stdlib.add_log_level,
        structlog.processors.TimeStamper(fmt="iso", utc=True),
        coerce_numpy,
        structlog.processors.StackInfoRenderer(),
        structlog.processors.format_exc_info,
    ]
    renderer: Processor
    if json_logs:
        renderer = structlog.processors.JSONRenderer(sort_keys=True)
    else:
        renderer = structlog.dev.ConsoleRenderer(
            colors=sys.stderr.isatty(),
            exception_formatter=structlog.dev.plain_traceback,
        )

    structlog.configure(
        processors=[*processors, renderer],
        wrapper_class=structlog.stdlib.BoundLogger,
        context_class=dict,
        logger_factory=structlog.stdlib.LoggerFactory(),
        cache_logger_on_first_use=True,
    )


def get_logger(name: str) -> structlog.stdlib.BoundLogger:
    """Logger for a gemrec module; pass __name__."""
    return structlog.get_logger(name)
