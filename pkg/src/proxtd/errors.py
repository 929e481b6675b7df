"""Exception types shared across the solver modules."""


class ProxTDError(Exception):
    """Base class for all errors raised by this package."""


class DimensionMismatch(ProxTDError):
    """Operand shapes are incompatible."""


class SingularMatrix(ProxTDError):
    """A factorization hit a pivot below the singularity threshold."""


class NoConvergence(ProxTDError):
    """Iterative estimate did not stabilize within the iteration cap.

    Carries the best estimate so far in ``best``; callers may treat it as a
    lower bound.
    """

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class BadSpectrum(ProxTDError):
    """Requested eigenvalue list is not closed under conjugation."""


class AssumptionViolated(ProxTDError):
    """A spectral precondition required by the chosen method fails."""


class NotPositiveDefinite(ProxTDError):
    """Cholesky factorization failed on a matrix required to be SPD."""


class BadStochastic(ProxTDError):
    """Rows expected to be probability distributions are not."""


class UnsupportedTransition(ProxTDError):
    """Sampled transition has zero proposal probability but nonzero weight."""


class MismatchedConfig(ProxTDError):
    """Estimator states with different lambda or dimension cannot merge."""


class InnerNotConverged(ProxTDError):
    """Inner fixed-point solve for a proximal evaluation hit its cap."""


class EnumerationTooLarge(ProxTDError):
    """Row-choice product set exceeds the enumeration cap."""


class NoProperComponent(ProxTDError):
    """No selection with spectral radius below one exists."""


class BadInitialCondition(ProxTDError):
    """Monotone algorithm requires x0 >= T(x0) componentwise."""


class NonMonotoneStep(ProxTDError):
    """Internal invariant breach: a monotone iteration increased a coordinate."""


class ContractionCheckFailed(ProxTDError):
    """Components are not a common-modulus contraction in the given norm."""


class BadInput(ProxTDError):
    """Invalid parameters or malformed problem file."""
