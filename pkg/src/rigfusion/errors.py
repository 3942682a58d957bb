"""Exception types shared across the toolkit."""


class RigFusionError(Exception):
    """Base class for toolkit-specific failures."""


class ConfigError(RigFusionError, ValueError):
    """Invalid or unknown configuration content."""


class TimeRangeError(RigFusionError, ValueError):
    """Queried timestamp lies outside the valid interval."""

    def __init__(self, t: float, t_min: float, t_max: float, what: str = "timestamp"):
        self.t = t
        self.t_min = t_min
        self.t_max = t_max
        super().__init__(f"{what} {t!r} outside valid interval [{t_min!r}, {t_max!r}]")


class InsufficientDataError(RigFusionError, ValueError):
    """Not enough samples, observations, or measurements for the operation."""


class InsufficientMotionError(InsufficientDataError):
    """Too few motion pairs survive the minimum-rotation filter."""


class DegenerateMotionError(RigFusionError, ValueError):
    """Motion set does not constrain the solution (e.g. collinear rotation axes)."""


class DegenerateGeometryError(RigFusionError, ValueError):
    """Sensor or station geometry makes the problem ill-posed."""


class NonConvergenceError(RigFusionError, RuntimeError):
    """Iterative solver did not converge; carries the final cost."""

    def __init__(self, message: str, final_cost: float):
        self.final_cost = final_cost
        super().__init__(f"{message} (final cost {final_cost:.6g})")


class NumericalError(RigFusionError, RuntimeError):
    """A matrix factorization or linear solve failed."""
