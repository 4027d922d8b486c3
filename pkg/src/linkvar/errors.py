"""Exception types raised across the package."""


class LinkvarError(Exception):
    """Base class for all package errors."""


class ValidationError(LinkvarError, ValueError):
    """Bad user input or violated precondition."""


class InvalidResolution(ValidationError):
    pass


class ShapeMismatch(ValidationError):
    pass


class DegenerateNonlinearity(LinkvarError):
    pass


class NonCoerciveF(LinkvarError):
    pass


class SpectralGapViolation(LinkvarError):
    pass


class NoNegativeSpectrum(LinkvarError):
    pass


class UnresolvedComponent(LinkvarError):
    pass


class LambdaNotZero(ValidationError):
    pass


class GeometryFailure(LinkvarError):
    pass


class NoAnticoercivity(GeometryFailure):
    pass


class RhoTooLarge(GeometryFailure):
    """1 - lambda g(rho)/f(rho) <= 0. For power f and g this happens at small rho (g/f = rho^(q-p))."""


class SolverFailure(LinkvarError):
    pass


class InnerDivergence(SolverFailure):
    pass


class LineSearchStall(SolverFailure):
    pass


class CollapseToZero(SolverFailure):
    pass


class MaxIterExceeded(SolverFailure):
    pass


class RootFindFailure(SolverFailure):
    pass


class NotMaxwellCase(ValidationError):
    pass
