"""Exception hierarchy shared by all modules."""

from __future__ import annotations


class Biham3dError(Exception):
    """Base class for every error raised by the package."""


class DomainError(Biham3dError):
    """A point or a finite-difference stencil left the declared domain."""


class VanishingFieldError(Biham3dError):
    """The vector field is (numerically) zero where a direction is needed."""


class FrameDegeneracyError(Biham3dError):
    """The reference axis is nearly parallel to the flow direction."""

    def __init__(self, message: str, suggested_axis=None):
        super().__init__(message)
        self.suggested_axis = suggested_axis


class TubeConstructionError(Biham3dError):
    """One or more seeds of a stream tube could not be integrated."""

    def __init__(self, message: str, failing_seeds=()):
        super().__init__(message)
        self.failing_seeds = list(failing_seeds)


class SpanSplitError(Biham3dError):
    """A Riccati solution blows up inside a span where it must stay finite."""


class DegeneratePairError(Biham3dError):
    """The two Poisson fields are (numerically) parallel somewhere."""


class NotPoissonError(Biham3dError):
    """A 1-form fails the Frobenius (Jacobi) condition beyond threshold."""


class PeriodicityError(Biham3dError):
    """Samples supplied for a periodic box do not match across the boundary."""


class MeshError(Biham3dError):
    """Malformed surface mesh, or a mesh too coarse for discrete transport."""


class ScenarioError(Biham3dError):
    """Invalid scenario configuration."""
