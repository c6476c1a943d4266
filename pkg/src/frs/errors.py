"""Exception types shared across the toolkit."""

from __future__ import annotations


class FrsError(Exception):
    """Base class for toolkit errors."""


class ConfigurationError(FrsError, ValueError):
    """A config value or input shape violates a documented constraint."""


class DomainError(FrsError, ValueError):
    """A numeric argument is outside the mathematical domain of an operation."""


class FormatError(FrsError, ValueError):
    """A binary file does not match the expected layout.

    ``offset`` is the byte position at which parsing failed.
    """

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (at byte {offset})"
        super().__init__(message)
        self.offset = offset


class TrainingError(FrsError, RuntimeError):
    """Training aborted.  ``last_params`` holds the last finite checkpoint."""

    def __init__(self, message: str, last_params=None, diagnostics: dict | None = None):
        super().__init__(message)
        self.last_params = last_params
        self.diagnostics = diagnostics or {}
