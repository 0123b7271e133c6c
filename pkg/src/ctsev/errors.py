"""Exception hierarchy shared by every stage of the pipeline."""


class CtsevError(Exception):
    """Base class for all pipeline errors."""


class InvalidParameterError(CtsevError, ValueError):
    pass


class DegenerateHistogramError(CtsevError, ValueError):
    """Raised when a histogram has fewer than two occupied bins."""


class GeometryError(CtsevError, ValueError):
    pass


class ScanLoadError(CtsevError, OSError):
    pass


class EmptyScanError(CtsevError, ValueError):
    """A scan has no slices left to analyse."""


class PhantomSpecError(CtsevError, ValueError):
    pass


class ModelFormatError(CtsevError):
    pass


class CorruptModelError(ModelFormatError):
    pass


class ModelVersionError(ModelFormatError):
    pass


class InvariantViolation(CtsevError, AssertionError):
    """An internal consistency check failed; indicates a bug, not bad input."""
