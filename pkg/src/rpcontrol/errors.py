"""Exception types raised across the package."""


class RPControlError(Exception):
    """Base class for all package errors."""


class InvalidMultiplicityError(RPControlError, ValueError):
    pass


class EmbedDimensionError(RPControlError, ValueError):
    pass


class RegisterShapeError(RPControlError, ValueError):
    pass


class ShapeError(RPControlError, ValueError):
    pass


class InvalidRateError(RPControlError, ValueError):
    pass


class ConfigError(RPControlError, ValueError):
    pass


class NumericError(RPControlError, ArithmeticError):
    """Non-finite values appeared in a state, generator or gradient."""


class ExpmDivergenceError(NumericError):
    pass


class SingularDriftError(NumericError):
    pass


class StiffCostateError(NumericError):
    """The costate integrator's step size underflowed."""


class AlignmentError(RPControlError, ValueError):
    pass
