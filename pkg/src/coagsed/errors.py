"""Exception types shared across the package."""


class CoagError(Exception):
    """Base class for all package errors."""


class DomainError(CoagError, ValueError):
    """An argument lies outside the domain where an operation is defined."""


class StabilityError(CoagError):
    """A time step violates the explicit stability bound.

    ``required_dt`` carries the largest admissible step when it is known.
    """

    def __init__(self, message, required_dt=None):
        super().__init__(message)
        self.required_dt = required_dt


class StiffnessError(CoagError):
    """The adaptive ODE integrator could not advance over an interval."""


class ConfigError(CoagError):
    """Invalid or unknown configuration entries."""
