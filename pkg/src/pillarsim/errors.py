"""Exception hierarchy shared across the package.

The CLI maps these onto process exit codes, so new exception types should
subclass one of the three families below rather than raising bare builtins.
"""

from __future__ import annotations


class PillarSimError(Exception):
    """Base class for all package errors."""


class ValidationError(PillarSimError, ValueError):
    """Bad user input: parameters, files, or configuration. Exit code 1."""


class ConfigurationError(ValidationError):
    """A structurally valid configuration that cannot be realized (e.g. a
    domain too small to hold the requested geometry)."""


class PlacementError(ValidationError):
    """A source or monitor placed outside the usable interior of the grid."""


class DataError(ValidationError):
    """Measured input data that cannot be analyzed as requested."""


class SolverError(PillarSimError, RuntimeError):
    """Numerical failure inside a simulation. Exit code 2."""


class StabilityError(SolverError):
    """Time step outside the stable range for the grid."""


class InstabilityError(SolverError):
    """Field energy diverged during time stepping."""


class ConsistencyError(SolverError):
    """An internal cross-check failed badly enough to distrust the result
    (e.g. collected power exceeding emitted power beyond tolerance)."""


class FitError(PillarSimError, RuntimeError):
    """Nonlinear fit failed to converge or produced non-physical parameters."""
