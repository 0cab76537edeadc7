"""Exception hierarchy shared by all modules."""


class Chi2PhaseError(Exception):
    """Base class for every error raised by the package."""


class DomainError(Chi2PhaseError, ValueError):
    """An argument lies outside the domain of an operation."""


class OverflowDomainError(DomainError, OverflowError):
    """A result would not be representable as a finite double."""


class AccuracyError(Chi2PhaseError, ArithmeticError):
    """A numerical procedure failed to reach its tolerance.

    ``estimate`` holds the best value found and ``residual`` the last
    difference between successive refinements.
    """

    def __init__(self, message, estimate=None, residual=None):
        super().__init__(message)
        self.estimate = estimate
        self.residual = residual


class DegeneracyError(DomainError):
    """Parameters make the physical model degenerate (e.g. v_b == v_c)."""


class ConfigurationError(Chi2PhaseError, ValueError):
    """A configuration is incomplete or inconsistent."""


class ResolutionError(DomainError):
    """A momentum grid is too coarse for the spectrum it must carry."""


class StepSizeError(AccuracyError):
    """Time integration drifted beyond the unitarity tolerance."""


class ConsistencyError(AccuracyError):
    """An internal cross-check (e.g. reality of an overlap) failed."""
