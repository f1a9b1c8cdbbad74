"""Exception hierarchy.

The CLI maps :class:`ConfigurationError` to exit code 2 and
:class:`NumericalError` to exit code 1.
"""


class ConfigurationError(ValueError):
    """Invalid user-supplied parameters (grid sizes, config keys, angles...)."""


class NumericalError(RuntimeError):
    """A solver or stepper failed to produce a trustworthy result."""


class GridError(ConfigurationError):
    pass


class IsometryError(ConfigurationError):
    pass


class ConvergenceError(NumericalError):
    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class EnergyIncreaseError(NumericalError):
    pass


class SpectrumCutoffError(NumericalError):
    pass


class SnapshotError(ValueError):
    pass
