"""Exception hierarchy shared by all modules."""


class DiluteLabError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(DiluteLabError, ValueError):
    """Invalid input: a precondition or a declared invariant does not hold."""


class SymmetryError(ValidationError):
    """Kernel coefficients violate h_{-k} = conj(h_k)."""


class DegeneracyError(ValidationError):
    """A symbol minimum is not quadratic non-degenerate."""


class OrderingError(ValidationError):
    """Scale exponents violate the required ordering."""


class PreconditionError(ValidationError):
    """An operation refused to run because its precondition is not certified."""


class ResolutionError(ValidationError):
    """A discretization mesh is too coarse for the requested model."""


class CapacityError(DiluteLabError, MemoryError):
    """Requested object exceeds the configured memory budget."""


class SingularityError(DiluteLabError, ArithmeticError):
    """A shifted system is (numerically) singular.

    ``gap`` carries the distance from the energy to the nearest eigenvalue.
    """

    def __init__(self, message, gap=None):
        super().__init__(message)
        self.gap = gap


class DivergenceError(DiluteLabError, ArithmeticError):
    """A lattice sum does not converge for the given constants."""
