"""Exception hierarchy for bctomo."""

from typing import Any, Dict, Optional


class BCTomoError(Exception):
    """Base class for all errors raised by bctomo."""


class ConfigError(BCTomoError, ValueError):
    """Experiment configuration is inconsistent."""


class MeshFormatError(BCTomoError, ValueError):
    """A mesh or density file could not be parsed."""

    def __init__(self, message: str, line: Optional[int] = None, path: Optional[str] = None):
        self.line = line
        self.path = path
        where = ''
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f":{line}" if where else f"line {line}"
        super().__init__(f"{where}: {message}" if where else message)


class InvariantError(BCTomoError, ValueError):
    """A domain object violates one of its invariants."""

    def __init__(self, invariant: str, detail: str = ''):
        self.invariant = invariant
        message = f"invariant violated: {invariant}"
        if detail:
            message += f" ({detail})"
        super().__init__(message)


class FactorizationError(BCTomoError, RuntimeError):
    """A matrix expected to be symmetric positive definite is not."""


class StageInputError(BCTomoError):
    """A stage input artifact is missing or belongs to another run."""

    def __init__(self, message: str, producer: Optional[str] = None):
        self.producer = producer
        if producer is not None:
            message = f"{message}; run '{producer}' first"
        super().__init__(message)


class StageError(BCTomoError):
    """A pipeline stage failed."""

    def __init__(self, stage: str, message: str):
        self.stage = stage
        super().__init__(f"stage '{stage}' failed: {message}")


class AcceptanceError(BCTomoError):
    """A configured residual or error ceiling was breached."""

    def __init__(self, message: str, report: Optional[Dict[str, Any]] = None):
        self.report = report or {}
        super().__init__(message)
