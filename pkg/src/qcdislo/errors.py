"""Exception hierarchy shared by every module of the package."""


class QCDError(Exception):
    """Base class for all errors raised by qcdislo."""


class NotPositiveDefinite(QCDError, ValueError):
    """Material moduli violate C > 0, K > 0, CK > R^2."""


class EvalAtCore(QCDError, ValueError):
    """A singular field was evaluated inside the exclusion radius of a core."""


class LoopThroughCore(QCDError, ValueError):
    """A circulation loop passes through the exclusion disc of a core."""


class GeometryError(QCDError, ValueError):
    pass


class MeshError(QCDError, RuntimeError):
    pass


class NotBoundary(QCDError, KeyError):
    pass


class NonFiniteIntegrand(QCDError, FloatingPointError):
    def __init__(self, point):
        self.point = tuple(float(v) for v in point)
        super().__init__(f"integrand is not finite at {self.point}")


class IncompatibleFlux(QCDError, ValueError):
    """Neumann data whose total boundary flux does not vanish."""


class SolverDiverged(QCDError, RuntimeError):
    pass


class BadRadii(QCDError, ValueError):
    pass


class BadCutoff(QCDError, ValueError):
    pass


class DegenerateFit(QCDError, ValueError):
    pass


class BadContour(QCDError, ValueError):
    pass


class ConfigError(QCDError, ValueError):
    pass
