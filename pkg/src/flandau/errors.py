"""Exception hierarchy used across the package.

The CLI maps these onto exit codes: configuration problems exit with 2,
numerical failures with 3, I/O failures with 4.
"""


class FlandauError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(FlandauError):
    """Invalid configuration, unknown keys, or out-of-range parameters."""


class NumericalError(FlandauError):
    """A numerical contract was violated during a computation."""


class NonFiniteFieldError(NumericalError):
    """A field contains NaN/Inf; carries the offending multi-index."""

    def __init__(self, message, node=None):
        super().__init__(message)
        self.node = node


class CflViolationError(NumericalError):
    """Explicit time step exceeds the stability bound."""

    def __init__(self, message, dt=None, dt_max=None, eigenvalue=None, node=None):
        super().__init__(message)
        self.dt = dt
        self.dt_max = dt_max
        self.eigenvalue = eigenvalue
        self.node = node


class PicardNonConvergenceError(NumericalError):
    """Fixed-point iteration hit its iteration cap; carries the residuals."""

    def __init__(self, message, residuals=()):
        super().__init__(message)
        self.residuals = list(residuals)


class DegenerateInputError(NumericalError):
    """An operation received an input outside its domain (e.g. zero mass)."""


class LeakWarning(UserWarning):
    """Density at the velocity-box boundary is above the containment bound."""
