class VirtualParticleError(Exception):
    """Base class for errors raised by this package."""


class ConfigError(VirtualParticleError, ValueError):
    """Inconsistent or invalid run / functional configuration."""


class DivergenceError(VirtualParticleError, FloatingPointError):
    """A particle coordinate became non-finite or exceeded the magnitude guard."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class WitnessMismatchError(VirtualParticleError):
    """A witness path was generated under a different configuration."""


class EmptyCloudError(VirtualParticleError, ValueError):
    """An operation needs at least one particle."""


class DatasetError(VirtualParticleError, ValueError):
    """Dataset rows violate the declared bounds."""

    def __init__(self, message, rows=()):
        super().__init__(message)
        self.rows = list(rows)


class InfeasibleScheduleError(VirtualParticleError, ValueError):
    """No (step size, horizon) pair satisfies the requested accuracy and caps."""


class SingularCovarianceError(VirtualParticleError, ArithmeticError):
    """Target covariance is singular where an inverse is required."""
