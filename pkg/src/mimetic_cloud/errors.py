"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid geometry, cloud, boundary or experiment configuration."""


class DisconnectedGraphError(ConfigurationError):
    """The epsilon-ball graph has more than one connected component."""


class UnisolvencyError(ArithmeticError):
    """A least-squares neighborhood cannot determine the polynomial fit.

    ``points`` lists the offending cloud indices when known, so callers can
    grow the neighborhood and retry.
    """

    def __init__(self, message, points=None):
        super().__init__(message)
        self.points = [] if points is None else list(points)


class CompatibilityError(ValueError):
    """A singular system was given a right-hand side outside its range."""


class SolverError(RuntimeError):
    """An iterative solve failed to reach the requested tolerance."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class CompatibilityWarning(RuntimeWarning):
    """Pure-flux data whose discrete sum is not zero; the bordered solve absorbs it."""
