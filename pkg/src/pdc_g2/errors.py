"""
Exception hierarchy. Input validation errors are also ValueErrors, numerical
and statistical failures are also RuntimeErrors.
"""


class PdcError(Exception):
    pass


# validation

class NonPositiveInput(PdcError, ValueError):
    pass


class DegenerateAdvance(PdcError, ValueError):
    pass


class InvalidSchmidtDomain(PdcError, ValueError):
    pass


class InvalidProbability(PdcError, ValueError):
    pass


class ZeroMagnification(PdcError, ValueError):
    pass


class ZeroDispersion(PdcError, ValueError):
    pass


class ImagingConditionViolated(PdcError, ValueError):
    def __init__(self, residual, tol):
        super().__init__(f"imaging condition violated: relative residual {residual:.3e} > tol {tol:.1e}")
        self.residual = residual
        self.tol = tol


class OrderOutOfRange(PdcError, ValueError):
    pass


class NotPositiveDefinite(PdcError, ValueError):
    pass


class OutOfGrid(PdcError, ValueError):
    pass


class GridTooCoarse(PdcError, ValueError):
    def __init__(self, message, edge_ratio=None):
        super().__init__(message)
        self.edge_ratio = edge_ratio


class ConfigInvalid(PdcError, ValueError):
    pass


class WindowTooWide(PdcError, ValueError):
    pass


# numerics / statistics

class SvdFailure(PdcError, RuntimeError):
    pass


class EmptyRecord(PdcError, RuntimeError):
    pass


class NoHeralds(EmptyRecord):
    pass


class DegenerateEstimate(PdcError, RuntimeError):
    def __init__(self, message, value=None):
        super().__init__(message)
        self.value = value


class FitDiverged(PdcError, RuntimeError):
    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual
