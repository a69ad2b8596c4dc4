"""Differential-form layer on the normal bundle and the global obstruction probes."""

from .chern import ChernResult, chern_number
from .connection import (
    ConnectionSample,
    NormalPlane,
    big_gamma_form,
    curvature,
    decomposability_residual,
    fit_big_gamma,
    fit_gamma,
    form_compatibility_residual,
    gamma_form,
    gauge_coherence_residual,
    unit_poisson_forms,
    xi,
)
from .mesh import TriangulatedSurface, icosphere, read_mesh, torus_mesh, write_mesh
from .torus import BottProbe, TorusIntegral, bott_probe, integrate_3form_torus, periodic_grid

__all__ = [
    "BottProbe",
    "ChernResult",
    "ConnectionSample",
    "NormalPlane",
    "TorusIntegral",
    "TriangulatedSurface",
    "big_gamma_form",
    "bott_probe",
    "chern_number",
    "curvature",
    "decomposability_residual",
    "fit_big_gamma",
    "fit_gamma",
    "form_compatibility_residual",
    "gamma_form",
    "gauge_coherence_residual",
    "icosphere",
    "integrate_3form_torus",
    "periodic_grid",
    "read_mesh",
    "torus_mesh",
    "unit_poisson_forms",
    "write_mesh",
    "xi",
]
