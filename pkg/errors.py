"""
Exceptions raised by the evdom modules.

Every error carries a human-readable message; the CLI maps them to exit code 2
(usage/config) or reports them as failed checks.
"""


class EvdomError(Exception):
    """Base class for all evdom errors."""


class DimensionMismatchError(EvdomError, ValueError):
    """Vectors or matrices live on different grids or have different sizes."""


class NonPositiveReferenceError(EvdomError, ValueError):
    """The reference vector u has a component <= 0."""


class GridMismatchError(EvdomError, ValueError):
    """Two grids cannot be related by restriction or zero-extension."""


class PreconditionError(EvdomError, ValueError):
    """An operation was called outside its documented domain."""


class EigensolverError(EvdomError, RuntimeError):
    """The dense eigensolver failed or returned non-finite data."""


class AmbiguousClusterError(EvdomError, ValueError):
    """An eigenvalue cluster around lambda0 is not separated from the rest."""


class InconclusiveRankTestError(EvdomError, RuntimeError):
    """Jordan structure of a defective cluster could not be determined."""


class NonErgodicError(EvdomError, ValueError):
    """The Cesaro limit need not exist for this spectrum."""


class SingularResolventError(EvdomError, ValueError):
    """lambda*I - A is singular or too ill-conditioned to solve."""

    def __init__(self, message: str, nearest_eigenvalue: complex = None):
        super().__init__(message)
        self.nearest_eigenvalue = nearest_eigenvalue


class EvolutionOverflowError(EvdomError, OverflowError):
    """A matrix exponential or quadrature panel overflowed."""

    def __init__(self, message: str, norm: float = None):
        super().__init__(message)
        self.norm = norm


class InconclusiveWitnessError(EvdomError, RuntimeError):
    """No converse witness was found within the trial budget."""


class ConfigError(EvdomError, ValueError):
    """Invalid command line or configuration file."""
