"""Exception hierarchy shared by the library and the CLI."""

from pathlib import Path

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INPUT = 2
EXIT_INTERNAL = 3


class PolygateError(Exception):
    """Base error; ``exit_code`` is what the CLI returns when it escapes a subcommand."""

    exit_code = EXIT_INTERNAL

    def __init__(self, message: str, details: list[str] | None = None):
        super().__init__(message)
        self.details = details or []


class UsageError(PolygateError):
    """Raised when a subcommand is invoked without the inputs it needs."""

    exit_code = EXIT_USAGE


class InputError(PolygateError, ValueError):
    """Raised when inputs violate a documented precondition."""

    exit_code = EXIT_INPUT


class ParseError(InputError):
    """Raised for a malformed line in a label or prediction file."""

    def __init__(self, message: str, path: Path | str | None = None, line: int | None = None):
        self.path = path
        self.line = line
        location = ""
        if path is not None:
            location = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(location + message)


class IngestionError(InputError):
    """Raised once per ingestion run with every failed item collected in ``details``."""


class InvariantViolation(PolygateError):
    """Raised when an artifact breaks the invariants it promises."""

    exit_code = EXIT_INTERNAL


class GeometryError(InputError):
    pass


class OutlierError(InputError):
    pass


class LossError(InputError):
    pass


class EvaluationError(InputError):
    pass


class SplitError(InputError):
    pass
