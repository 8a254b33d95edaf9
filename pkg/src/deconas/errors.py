"""Exception hierarchy shared across the package."""


class DeconasError(Exception):
    """Base class for all deconas errors."""


class LengthError(DeconasError):
    """A sequence has the wrong number of elements."""


class RangeError(DeconasError):
    """A value lies outside its admissible range."""


class ValidationError(DeconasError):
    """An architecture fails validation against its search space."""


class SpaceTooLargeError(DeconasError):
    """Enumeration was requested for a space above the caller's limit."""


class ShapeError(DeconasError):
    """Tensor shapes are inconsistent for the requested operation."""


class GradientError(DeconasError):
    """A required gradient is missing."""


class BankError(DeconasError):
    """A weight bank does not match the config it is used with."""


class DataError(DeconasError):
    """A dataset is empty or unusable."""


class FormatError(DeconasError):
    """A file does not conform to its expected format."""
