"""Exception hierarchy shared by all freeflow modules."""
from __future__ import annotations


class FreeflowError(Exception):
    """Base class for every error raised by this package."""


class QuadratureFailure(FreeflowError):
    """Adaptive quadrature could not reach the requested tolerance in budget."""

    def __init__(self, message, estimate=None, error=None):
        super().__init__(message)
        self.estimate = estimate
        self.error = error


class DomainError(FreeflowError):
    """Evaluation requested outside the declared analytic domain."""


class MissingTailMetadata(FreeflowError):
    """Unbounded density piece lacks the tail exponent needed for moments."""


class NotNevanlinna(FreeflowError):
    """A probe found Im f > tolerance on the upper half-plane."""

    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness


class ExtrapolationUnstable(FreeflowError):
    """A Richardson ladder failed to settle."""


class EvaluatorFailure(FreeflowError):
    """A user-supplied evaluator raised; carries the offending point."""

    def __init__(self, message, point=None):
        super().__init__(message)
        self.point = point


class NewtonDivergence(FreeflowError):
    """Damped Newton ran out of iterations; carries the iterate trace."""

    def __init__(self, message, trace=()):
        super().__init__(message)
        self.trace = tuple(trace)


class OutsideInversionDomain(FreeflowError):
    """Argument lies outside the estimated Gamma domain."""


class OutsideImage(FreeflowError):
    """Target point is (numerically) not in the image of the conformal map."""


class PoleOnPath(FreeflowError):
    """An integration segment passes too close to a real pole."""


class NotContaining(FreeflowError):
    """The image of the primitive contains no translate of the half-plane."""

    def __init__(self, message, certificate=None):
        super().__init__(message)
        self.certificate = certificate


class StepUnderflow(FreeflowError):
    """ODE step size fell below the minimum near a boundary singularity."""
