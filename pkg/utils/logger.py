"""Logging configuration for bctomo."""

import logging
import sys
from contextlib import contextmanager
from typing import Iterator

import structlog
from structlog.types import Processor


def _renderer(log_format: str) -> Processor:
    if log_format == 'json':
        return structlog.processors.JSONRenderer(sort_keys=True)
    return structlog.dev.ConsoleRenderer(colors=sys.stderr.isatty())


def setup_logging(level: str = 'INFO', log_format: str = 'text') -> None:
    """
    Configure structlog on top of the stdlib root logger.

    Records go to stderr; stdout carries the rich stage reports. Calling
    again (e.g. once per CLI invocation under a test runner) replaces the
    previous configuration.

    Args:
        level: Log level name, unknown names fall back to INFO
        log_format: 'json' for one object per line, anything else for console output
    """
    log_level = getattr(logging, level.upper(), logging.INFO)
    logging.basicConfig(format="%(message)s", level=log_level, stream=sys.stderr, force=True)

    processors: list[Processor] = [
        structlog.contextvars.merge_contextvars,
        structlog.stdlib.filter_by_level,
        structlog.stdlib.add_logger_name,
        structlog.stdlib.add_log_level,
        structlog.processors.TimeStamper(fmt="iso"),
        structlog.processors.StackInfoRenderer(),
        structlog.processors.format_exc_info,
        _renderer(log_format),
    ]
    structlog.configure(
        processors=processors,
        wrapper_class=structlog.stdlib.BoundLogger,
        context_class=dict,
        logger_factory=structlog.stdlib.LoggerFactory(),
        cache_logger_on_first_use=True,
    )
    structlog.get_logger(__name__).debug("Logging configured", level=level, format=log_format)


@contextmanager
def stage_context(stage: str) -> Iterator[None]:
    """Tag every record emitted on this thread with the running stage."""
    with structlog.contextvars.bound_contextvars(stage=stage):
        yield
