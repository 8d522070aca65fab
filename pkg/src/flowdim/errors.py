"""Shared exception types."""


class FlowdimError(Exception):
    """Base class for all library errors."""


class SchemaError(FlowdimError):
    """Invalid configuration or descriptor (maps to CLI exit code 2)."""


class FeasibilityError(FlowdimError):
    """A computation is infeasible at the given resolution (CLI exit code 3).

    Raised when a cloud is too coarse to span targets, a measure cannot
    reach the requested mass, a bisection bracket cannot be found, or all
    sampled pairs are degenerate.
    """


class CapacityError(FlowdimError):
    """An exact-mode size cap or enumeration cap was exceeded."""
