"""Exception types shared across the package."""


class RobustProjError(Exception):
    """Base class for all package errors."""


class DimensionError(RobustProjError):
    """Operand shapes are incompatible with the requested operation."""


class ParameterError(RobustProjError):
    """A scalar parameter is outside its valid range."""


class DataFormatError(RobustProjError):
    """A data file does not match its declared binary format."""


class CountError(DataFormatError):
    """A data file declares or contains an unexpected number of records."""


class TruncationError(DataFormatError):
    """A data file ends before its declared payload is complete."""


class DivergenceError(RobustProjError):
    """Training produced a non-finite loss."""

    def __init__(self, epoch, message=None):
        self.epoch = epoch
        super().__init__(message or f"non-finite loss at epoch {epoch}")


class UnsupportedHeadError(RobustProjError):
    """The requested computation is not defined for this head type."""


class ModelIOError(RobustProjError):
    """A model file failed to load (bad magic, version, or truncation)."""
