"""Exception hierarchy shared by every module.

The split mirrors the failure surfaces a caller can act on: bad wiring
(ConfigurationError), bad generative parameter values (ParameterError),
bad runtime inputs (InputError), unreadable or malformed files (DataError),
and numerically undefined results (NumericalError).
"""


class PpnetError(Exception):
    """Base class for all errors raised by this package."""


class ConfigurationError(PpnetError):
    """Structural mismatch: channel counts, grid spacing, missing metadata."""


class ParameterError(PpnetError):
    """A generative parameter is outside its valid domain."""


class InputError(PpnetError):
    """A runtime input (image, vector, record) violates a precondition."""


class DataError(PpnetError):
    """A file could not be read, decoded, or parsed."""


class NumericalError(PpnetError):
    """A result is mathematically undefined (e.g. zero-variance correlation)."""


class UsageError(PpnetError):
    """A request that is syntactically valid but not meaningful (CLI misuse)."""
