"""Errors raised by ulocflow."""
from __future__ import annotations

from .const import EXIT_NUMERICAL
from .const import EXIT_VALIDATION


class UlocflowError(Exception):
    """Base class for ulocflow errors."""

    exit_code = 1


class ValidationError(UlocflowError):
    """Inputs, preconditions or files are invalid."""

    exit_code = EXIT_VALIDATION


class NumericalFailure(UlocflowError):
    """A numerical procedure broke down."""

    exit_code = EXIT_NUMERICAL


class NonContraction(NumericalFailure):
    """A fixed-point iteration failed to contract."""

    def __init__(self, message: str, factor: float) -> None:
        """Initialize with the observed contraction factor."""
        super().__init__(message)
        self.factor = factor


class StageFailed(UlocflowError):
    """A pipeline stage failed."""

    def __init__(self, stage: str, cause: Exception) -> None:
        """Wrap the cause of a failed stage."""
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
        self.exit_code = getattr(cause, "exit_code", 1)
