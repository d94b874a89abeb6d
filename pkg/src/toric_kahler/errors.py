"""Exception hierarchy.

Validation errors map to CLI exit code 2, numerical failures to exit code 3.
"""


class ToricError(Exception):
    """Base class for all package errors."""


class ValidationError(ToricError):
    """Input data violates a structural requirement."""


class NumericalError(ToricError):
    """A numerical procedure failed to deliver a trustworthy result."""


# polytope
class Unbounded(ValidationError):
    pass


class EmptyInterior(ValidationError):
    pass


class NonPrimitiveNormal(ValidationError):
    pass


class RedundantFacet(ValidationError):
    pass


class NonSimpleVertex(ValidationError):
    def __init__(self, vertex, facets):
        self.vertex = tuple(vertex)
        self.facets = tuple(facets)
        super().__init__(f"vertex {_fmt(vertex)} lies on {len(facets)} facets {list(facets)}")


class NonUnimodularVertex(ValidationError):
    def __init__(self, vertex, det):
        self.vertex = tuple(vertex)
        self.det = det
        super().__init__(f"vertex {_fmt(vertex)} has normal determinant {det}")


class NotFano(ValidationError):
    pass


# potential
class NewtonDivergence(NumericalError):
    def __init__(self, t, residual):
        self.t = t
        self.residual = residual
        super().__init__(f"Legendre Newton solve failed at t={t} (residual {residual:.3e})")


class RangeViolation(ValidationError):
    pass


class OutsidePolytope(ValidationError):
    pass


# curvature
class SingularHessian(NumericalError):
    def __init__(self, point=None, message="Hessian is not positive definite"):
        self.point = point
        where = "" if point is None else f" at {point}"
        super().__init__(message + where)


class NonpositiveWeight(ValidationError):
    pass


# functional / soliton / asymptotics
class QuadratureFailure(NumericalError):
    def __init__(self, facet=None, message="non-finite integrand"):
        self.facet = facet
        super().__init__(message if facet is None else f"{message} near facet {facet}")


class NonConvergence(NumericalError):
    pass


class TruncationBudgetExceeded(NumericalError):
    pass


class DegenerateSupport(ValidationError):
    pass


# solver
class InconsistentA(ValidationError):
    pass


class NonpositiveQ(ValidationError):
    pass


class LinearSolveFailure(NumericalError):
    pass


def _fmt(point):
    return "(" + ", ".join(str(c) for c in point) + ")"
