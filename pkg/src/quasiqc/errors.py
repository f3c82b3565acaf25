"""Exception types shared across the package."""


class QuasiqcError(Exception):
    """Base class for all package errors."""


class ParameterError(QuasiqcError):
    """Invalid argument values (bad ranges, shapes, or combinations)."""


class QuadratureError(QuasiqcError):
    """Quadrature failed to reach the requested tolerance.

    Carries the best achieved error estimate in ``achieved``.
    """

    def __init__(self, message, achieved=None):
        super().__init__(message)
        self.achieved = achieved


class FilterRangeError(QuasiqcError):
    """A filter evaluation ran past the tabulated radial range."""


class TableInvariantError(QuasiqcError):
    """A freshly built lookup table violates its own invariants."""


class SchemaError(QuasiqcError):
    """Malformed data file; ``line`` is the 1-based offending line if known."""

    def __init__(self, message, line=None):
        super().__init__(message)
        self.line = line


class ResourceGuardError(QuasiqcError):
    """A computation was refused because it would be too large.

    Pass ``allow_large=True`` at the call site to proceed anyway.
    """
