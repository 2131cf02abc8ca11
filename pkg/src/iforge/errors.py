"""Exception types shared across the library."""


class IforgeError(Exception):
    """Base class for all library-specific errors."""


class NotARotation(IforgeError):
    """Matrix fails the orthogonality / det = +1 check."""


class AllZero(IforgeError):
    """Basis selection called with three zero vectors."""


class DegenerateMetric(IforgeError):
    """Metric is not positive definite at the requested point."""


class ChartMismatch(IforgeError):
    """Two form fields live on different charts."""


class OutOfDomain(IforgeError):
    """Point lies outside the configured domain of a field."""


class SingularPoint(IforgeError):
    """Field evaluated at a genuine singularity of its gauge."""


class NotAntisymmetric(IforgeError):
    """Curvature seed is not an antisymmetric array."""


class OriginSingular(IforgeError):
    """Operation undefined at the origin (r = 0)."""


class NonFiniteValue(IforgeError):
    """Integrand returned NaN or infinity."""


class ResolutionInsufficient(IforgeError):
    """Quadrature error estimate too large for the requested quantity."""


class PlaquetteBranchCut(IforgeError):
    """Plaquette rotation angle reached pi; principal log undefined."""


class LineSearchFailed(IforgeError):
    """Armijo backtracking exhausted its budget without decrease."""
