"""Semantic exception hierarchy shared by all pacgibbs modules."""


class PacgibbsError(Exception):
    """Base class for all errors raised by this package."""


class InvalidArgumentError(PacgibbsError, ValueError):
    """An argument violates a documented precondition (non-finite, wrong range, ...)."""


class InvalidFeatureError(PacgibbsError, ValueError):
    """A feature block contains NaN or otherwise cannot form a valid feature vector."""


class ContractViolationError(PacgibbsError):
    """A caller-supplied value breaks an interface contract (e.g. non-unit feature)."""


class InvalidSequenceError(PacgibbsError, ValueError):
    """A token sequence contains symbols outside the model alphabet or is too short."""


class DataFormatError(PacgibbsError, ValueError):
    """A data file failed to parse; ``line`` is the 1-based offending line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ConfigError(PacgibbsError, ValueError):
    """A run configuration is malformed or references missing resources."""


class TrainingAbort(PacgibbsError):
    """Training was aborted (degraded sampling or divergence); message carries diagnostics."""
