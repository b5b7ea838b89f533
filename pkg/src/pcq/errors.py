"""Exception types shared across the package, mapped to CLI exit codes."""


class PcqError(Exception):
    """Base class for package errors."""


class ConfigError(PcqError):
    """Invalid or inconsistent configuration (CLI exit code 2)."""


class InvalidInput(PcqError):
    """Malformed data fed to an operation (CLI exit code 3)."""


class DataError(PcqError):
    """Unreadable or inconsistent dataset artifacts (CLI exit code 3)."""


class MissingEmbedding(DataError):
    """A precomputed embedding file was not found for a segment."""


class ShapeError(PcqError):
    """Tensor arguments have incompatible shapes (CLI exit code 3)."""


class CheckFailed(PcqError):
    """A numerical verification (gradient check, finite loss) failed (CLI exit code 4)."""


class NumericalError(PcqError):
    """Non-finite values encountered during training (CLI exit code 4)."""
