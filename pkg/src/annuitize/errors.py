"""Exception types raised across the package."""

from __future__ import annotations


class AnnuitizeError(Exception):
    """Base class for all package errors."""


class QuadratureTailError(AnnuitizeError):
    """Annuity quadrature discarded more tail mass than allowed."""


class ConfigError(AnnuitizeError, ValueError):
    """Invalid problem or run configuration."""


class DegenerateTerminal(AnnuitizeError):
    """gamma is undefined at the effective horizon."""


class BracketFailure(AnnuitizeError):
    """No sign change of the residual was found while bracketing a root.

    Attributes
    ----------
    node : int
        Grid index where bracketing failed.
    landscape : list of (float, float)
        Sampled ``(x, residual)`` pairs, kept for diagnosis.
    """

    def __init__(self, message: str, node: int = -1, landscape=None):
        super().__init__(message)
        self.node = node
        self.landscape = list(landscape or [])


class GridMismatch(AnnuitizeError):
    """Requested time is not a node of the boundary grid."""


class PsorDivergence(AnnuitizeError):
    """Projected SOR did not converge within its iteration budget."""


class StabilityViolation(AnnuitizeError):
    """Explicit scheme time step exceeds the stability bound."""
