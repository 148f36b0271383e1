"""Exception hierarchy shared by all modules."""


class CCALError(Exception):
    """Base class for every error raised by this package."""


class ContractError(CCALError, ValueError):
    """An operation was called outside its documented preconditions."""


class StaleTapeError(ContractError):
    """A reverse-mode tape was used after the object that produced it moved on."""


class DecompositionError(CCALError):
    """Cholesky factorization hit a non-positive pivot.

    ``pivot`` is 1-based, matching how pivots are usually reported by hand.
    """

    def __init__(self, pivot, value):
        self.pivot = pivot
        self.value = value
        super().__init__(f"matrix is not positive definite: pivot {pivot} is {value:.3g}")


class SingularMatrixError(CCALError):
    def __init__(self, index, value):
        self.index = index
        self.value = value
        super().__init__(f"triangular matrix is singular: diagonal entry {index} is {value:.3g}")


class ConvergenceError(CCALError):
    def __init__(self, sweeps, residual):
        self.sweeps = sweeps
        self.residual = residual
        super().__init__(f"Jacobi eigensolver did not converge after {sweeps} sweeps "
                         f"(off-diagonal norm {residual:.3e})")


class DegenerateSpectrumError(CCALError):
    """Two eigenvalues are too close for a meaningful eigenvector gradient."""

    def __init__(self, i, j, gap):
        self.pair = (i, j)
        self.gap = gap
        super().__init__(f"eigenvalues {i} and {j} differ by {gap:.3e}; eigenvector gradient undefined")


class InsufficientSamplesError(ContractError):
    pass


class UndefinedScoreError(CCALError, ValueError):
    """Cosine score requested for a zero-norm vector."""

    def __init__(self, message, row=None):
        self.row = row
        super().__init__(message)


class PoisonedGradientError(CCALError):
    pass


class FormatError(CCALError):
    def __init__(self, message, offset):
        self.offset = offset
        super().__init__(f"{message} (at byte offset {offset})")
