"""Exception types shared across the package."""


class DataError(Exception):
    """Malformed input files, unresolvable records, mismatched datasets."""


class NumericalError(Exception):
    """A numerical procedure produced non-finite values or failed outright."""


class NonConvergenceError(NumericalError):
    """An iterative solver ran out of iterations.

    Carries the last residual so callers can report how close it got.
    """

    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


class ScaleMismatchError(ValueError):
    """Two distributions on different bucket scales were combined."""


class InfeasibleMomentsError(ValueError):
    """A (mean, std) target that no distribution on the scale can attain."""


class DegenerateInputError(ValueError):
    """Statistic undefined for the input (e.g. zero-variance correlation)."""
