"""Typed exceptions shared across the package."""


class NdfError(Exception):
    """Base class for all package errors."""


class FormatError(NdfError):
    """File magic/version mismatch or otherwise unreadable container."""


class CorruptFileError(FormatError):
    """Structurally valid header but inconsistent or truncated payload."""


class DataError(NdfError):
    """Payload values violate invariants (non-finite entries, bad ranges)."""


class ParameterError(NdfError, ValueError):
    """Invalid argument value for an operation."""


class UnknownVariableError(NdfError, KeyError):
    """Requested ensemble variable name does not exist."""


class DegenerateSampleError(NdfError):
    """Sample vector has zero variance; the measure is undefined."""


class ShapeError(NdfError, ValueError):
    """Array shapes do not chain for the requested operation."""


class ConfigError(NdfError, ValueError):
    """Internally inconsistent model or training configuration."""


class ModelCorruptError(NdfError):
    """Model parameters contain non-finite values."""


class TrainingError(NdfError):
    """Training aborted (non-finite loss or gradients)."""


class NotFoundError(NdfError, KeyError):
    """Registry lookup failed (unknown model or ensemble id)."""
