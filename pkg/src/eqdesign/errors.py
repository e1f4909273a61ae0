"""Exception hierarchy.

Validation problems derive from :class:`ValueError`; numerical failures
(singular moment blocks, infeasible cubature grids) derive from
:class:`NumericalError` so callers can tell user error from bad numerics.
"""


class InvalidDimensionError(ValueError):
    pass


class DegreeError(ValueError):
    pass


class UnsupportedKindError(ValueError):
    pass


class NumericalError(ArithmeticError):
    pass


class SingularMomentMatrixError(NumericalError):
    def __init__(self, message, pivot=None, generator=None):
        super().__init__(message)
        self.pivot = pivot
        self.generator = generator


class InfeasibleGridError(NumericalError):
    pass
