"""Exception hierarchy shared across the package.

Each class maps to a distinct CLI exit code (see cli.EXIT_CODES).
"""


class PoseDistillError(Exception):
    """Base class for package errors."""


class ConfigurationError(PoseDistillError):
    """Invalid configuration value or inconsistent option combination."""


class DataError(PoseDistillError):
    """Missing or malformed dataset / batch content."""


class CapabilityError(PoseDistillError):
    """Requested operation is not supported by the given checkpoint/model."""


class IntegrityError(PoseDistillError):
    """Checkpoint or file corruption (checksum/shape mismatch)."""


class CheckFailure(PoseDistillError):
    """A verification check (gradient identity, stop-gradient, ...) failed."""


class EvaluationError(PoseDistillError):
    """Ranking evaluation cannot produce a result (e.g. no valid query)."""


class NumericError(PoseDistillError):
    """Non-finite values where finite arithmetic is required."""
