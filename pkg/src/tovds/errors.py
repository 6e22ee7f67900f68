"""Exception hierarchy for the tovds package.

Every expected failure mode maps to a named exception so that drivers can
report machine-readable error cases instead of stack traces.
"""

from __future__ import annotations


class TovdsError(Exception):
    """Base class for all package errors."""


class GammaNotAdmissible(TovdsError):
    """Adiabatic exponent outside (1, 2) or 1/(gamma-1) not an integer."""


class CausalityViolated(TovdsError):
    """Sound speed dP/drho exits (0, c^2) on the declared density range."""


class DomainExceeded(TovdsError):
    """Thermodynamic input beyond the declared validity range of the EOS."""


class NoConvergence(TovdsError):
    """Root finder failed to converge (ill-posed correction series)."""


class NotMonotoneShort(TovdsError):
    """Pressure gradient lost its sign: cosmological repulsion dominates."""

    def __init__(self, message, radius=None):
        super().__init__(message)
        self.radius = radius


class HorizonApproached(TovdsError):
    """Metric factor kappa reached zero: no static star for these inputs."""

    def __init__(self, message, radius=None):
        super().__init__(message)
        self.radius = radius


class NoBoundary(TovdsError):
    """Integration exceeded the radius cap without the state variable
    reaching zero."""


class InsufficientResolution(TovdsError):
    """Grid too coarse for a requested fit or derivative estimate."""


class QuadratureFailed(TovdsError):
    """Adaptive quadrature did not reach the requested tolerance."""


class GridMismatch(TovdsError):
    """Function values supplied on a grid different from the chart's."""


class NotConverged(TovdsError):
    """Eigenvalue residual above tolerance."""


class SpuriousMode(TovdsError):
    """Eigenvector dominated by endpoint oscillation."""


class NonpositiveEigenvalue(TovdsError):
    """Modal seeding requested for a mode with lambda <= 0."""


class UnstableStep(TovdsError):
    """Discrete energy growth signals a time step beyond the stability
    limit; never silently clipped."""


class DegenerateFactor(TovdsError):
    """The squared factor in the jump coefficient is non-positive."""


class SingularMatching(TovdsError):
    """The C^1 continuity system at the stellar surface is rank deficient."""


class ConfigInvalid(TovdsError):
    """Run configuration failed validation before any computation."""
