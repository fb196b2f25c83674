"""Exception hierarchy shared by every module."""


class STQFCError(Exception):
    """Base class for all package errors."""


class ConfigurationError(STQFCError, ValueError):
    """Invalid grid, crystal, solver or scenario parameters."""


class ShapeError(STQFCError, ValueError):
    """Fields that do not share a grid or rank."""


class DegenerateInputError(STQFCError, ValueError):
    """Inputs for which the requested quantity is undefined (all-zero counts, i == j, ...)."""


class AccuracyError(STQFCError):
    """A mode does not fit its window; raised instead of a warning in strict mode."""


class AccuracyWarning(UserWarning):
    pass


class ConvergenceError(STQFCError):
    """The adaptive step controller ran out of steps or hit the minimum step."""


class NumericBlowupError(STQFCError, FloatingPointError):
    """A non-finite value appeared during propagation."""

    def __init__(self, message, last_good_z):
        super().__init__(f"{message} (last good z = {last_good_z:.6e} m)")
        self.last_good_z = last_good_z


class ValidationError(ConfigurationError):
    """Scenario config failed schema validation; ``problems`` lists every failing field."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))
