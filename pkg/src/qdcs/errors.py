"""Exception types raised across the package."""


class QdcsError(Exception):
    """Base class for package-specific failures."""


class FormatError(QdcsError, ValueError):
    """A file (PGM image or cipher package) is malformed or truncated."""


class NoUsableMeasurementsError(QdcsError, ValueError):
    """Every quantized measurement is saturated, nothing is left to decode."""


class SolverError(QdcsError, RuntimeError):
    """The sparse solver produced a non-finite objective.

    ``diagnostics`` holds the iteration count and the last finite objective.
    """

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class CollectionError(QdcsError, RuntimeError):
    """Known-plaintext collection could not reach full rank."""


class ConditioningError(QdcsError, RuntimeError):
    """The plaintext matrix is too ill-conditioned for a reliable solve."""
