"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid or inconsistent configuration."""


class ShapeMismatchError(ValueError):
    """Array shapes do not agree with the operator, lattice or grid."""


class NumericalError(ArithmeticError):
    """A solver produced a non-finite cost or iterate."""


class FitError(RuntimeError):
    """A Gaussian fit could not be performed or diverged."""
