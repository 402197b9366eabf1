"""Exception hierarchy shared across the package.

CLI exit codes map onto this hierarchy: ValidationError -> 1,
NumericalError (and subclasses) -> 2.
"""


class EdgecauseError(Exception):
    """Base class for package errors."""


class ValidationError(EdgecauseError, ValueError):
    """Bad inputs: malformed files, out-of-range indices, dimension mismatches."""


class EnumerationError(ValidationError):
    """Exact enumeration refused; carries the offending dyad count."""

    def __init__(self, n_dyads, limit):
        self.n_dyads = n_dyads
        self.limit = limit
        super().__init__(
            f"exact enumeration refused: {n_dyads} eligible dyads exceeds limit {limit}"
        )


class NumericalError(EdgecauseError, RuntimeError):
    """Numerical failure: degeneracy, separation, factorization breakdown."""


class DegeneracyError(NumericalError):
    """Model degeneracy or a perfectly separated pseudo-likelihood.

    `direction` holds the separating/degenerate parameter direction when known.
    """

    def __init__(self, message, direction=None):
        self.direction = direction
        super().__init__(message)


class FactorizationError(NumericalError):
    """Covariance factorization failed even after ridge repair."""
