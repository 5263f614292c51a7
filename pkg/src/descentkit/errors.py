"""Exception types shared across the package."""


class DescentError(Exception):
    """Base class for every error raised by descentkit."""


class DimensionMismatch(DescentError, ValueError):
    pass


class NonSymmetric(DescentError, ValueError):
    pass


class NumericalFailure(DescentError, ArithmeticError):
    """A numerical precondition failed (non-PD input, singular system, ...)."""


class NotPositiveDefinite(NumericalFailure):
    pass


# the cg solvers speak of SPD matrices
NotSpd = NotPositiveDefinite


class Singular(NumericalFailure):
    pass


class SingularHessian(Singular):
    pass


class NegativeQuadraticForm(NumericalFailure):
    pass


class NonPositiveCurvature(NumericalFailure):
    pass


class NonFiniteGradient(NumericalFailure):
    pass


class NoConvergence(DescentError, RuntimeError):
    pass


class MaxIters(DescentError, RuntimeError):
    pass


class BracketInvalid(DescentError, ValueError):
    pass


class NotConjugate(DescentError, ValueError):
    pass


class NotDescentDirection(DescentError, ValueError):
    pass


class EmptyBatch(DescentError, ValueError):
    pass


class ConfigError(DescentError, ValueError):
    pass
