"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Matrix or vector shapes are inconsistent with the operation."""


class NumericalError(RuntimeError):
    """An iterative numerical procedure failed to converge or broke down."""


class PreconditionError(ValueError):
    """A documented precondition of an operation does not hold."""


class AssumptionError(PreconditionError):
    """A standing assumption of the method is violated.

    Raised for missing spanning trees, non-stabilizable pairs, inadmissible
    trigger decay rates, and failed spectral consensus conditions.  The CLI
    maps this class to its own exit code.
    """


class TimeOrderError(ValueError):
    """Timestamps passed to a runtime operation decrease."""


class TopologyError(ValueError):
    """A message or query refers to an edge that does not exist."""


class ConfigError(ValueError):
    """A run configuration document is malformed or inconsistent."""
