"""Exception and warning classes used across the package."""


class DomainError(ValueError):
    """Argument outside the domain of a scalar function."""


class NotPositiveDefinite(ValueError):
    """Matrix failed a Cholesky factorization."""


class AsymmetryBeyondTolerance(ValueError):
    """Matrix is not symmetric within the accepted relative tolerance."""


class BarrierDomainError(ValueError):
    """A window produced a non-positive node statistic.

    This happens only for degenerate windows (e.g. all-zero observations)
    and usually signals corrupted input.
    """


class WindowNotFull(RuntimeError):
    """A statistic was requested before the window buffer holds ``w`` rows."""


class SeparationWarning(UserWarning):
    """Configured change spacing is below the separation guard."""


class NotConverged(UserWarning):
    """Iterative solver hit its iteration cap; the last iterate is returned."""
