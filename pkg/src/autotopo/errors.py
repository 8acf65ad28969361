"""Exception types shared across the package."""

from __future__ import annotations


class AutotopoError(Exception):
    """Base class for every error raised by this package."""


class ProblemFormatError(AutotopoError):
    """A problem description is syntactically or semantically invalid.

    ``path`` points at the offending field using dotted/indexed notation,
    e.g. ``loads[0].force.x``.
    """

    def __init__(self, path: str, message: str):
        self.path = path
        self.message = message
        super().__init__(f"{path}: {message}" if path else message)


class DegenerateDomainError(AutotopoError):
    """The geometry leaves no active elements to optimize."""


class SolverFailure(AutotopoError):
    """The linear solver (or an objective evaluation) failed.

    ``code`` is a stable machine-readable diagnostic used by the review
    rules; ``message`` is for humans.
    """

    def __init__(self, code: str, message: str):
        self.code = code
        self.message = message
        super().__init__(f"{code}: {message}")


class UpdateFailure(AutotopoError):
    """A design update could not be computed (degenerate subproblem)."""

    def __init__(self, code: str, message: str):
        self.code = code
        self.message = message
        super().__init__(f"{code}: {message}")


class PlanningError(AutotopoError):
    """A validated spec could not be turned into a runnable plan."""


class GatewayError(AutotopoError):
    """Base class for language-model gateway failures."""


class TransportError(GatewayError):
    """The backing completion endpoint stayed unreachable after retries."""


class TranscriptExhausted(GatewayError):
    """A mock persona ran out of scripted replies."""


class MissingSlotError(GatewayError):
    """A prompt template was rendered without one of its input slots."""


class SchemaParseError(GatewayError):
    """Structured text did not match the requested schema.

    ``path`` identifies the first offending field.
    """

    def __init__(self, path: str, message: str):
        self.path = path
        self.message = message
        super().__init__(f"{path}: {message}" if path else message)


class WrongStateError(AutotopoError):
    """A session operation was issued in a state that does not allow it."""
