"""Integration of 3-forms over a periodic box (the 3-torus)."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..errors import PeriodicityError

__all__ = ["BottProbe", "TorusIntegral", "bott_probe", "integrate_3form_torus", "periodic_grid"]


@dataclass(frozen=True)
class TorusIntegral:
    value: float
    error_estimate: float  # |I_n - I_{n/2}|, the difference to the half-resolution rule
    n: int
    period: float


def periodic_grid(n: int, period: float = 1.0, origin=(0.0, 0.0, 0.0)):
    """Uniform grid of ``n^3`` points without the duplicated right boundary, shape ``(n, n, n, 3)``."""
    t = np.arange(n) * (period / n)
    X, Y, Z = np.meshgrid(t, t, t, indexing="ij")
    return np.stack([X, Y, Z], axis=-1) + np.asarray(origin, dtype=float)


def _rule(samples, period):
    n = samples.shape[0]
    return float(np.sum(samples)) * (period / n) ** 3


def integrate_3form_torus(omega, n: int = 32, period: float = 1.0, origin=(0.0, 0.0, 0.0),
                          closed: bool = False, periodicity_tol: float = 1e-8) -> TorusIntegral:
    """Integrate a 3-form over ``[origin, origin + period)^3``.

    ``omega`` is either a callable returning the ``dx^dy^dz`` coefficient
    (sampled on an ``n^3`` grid) or a cubic array of samples. With
    ``closed=True`` the array includes the right boundary, which must repeat
    the left one within ``periodicity_tol`` (relative to the sample maximum).

    On a periodic grid the trapezoidal rule is the rectangle rule and converges
    spectrally for smooth data, so the difference to the half-resolution rule
    is a conservative error estimate.
    """
    if callable(omega):
        samples = np.asarray(omega(periodic_grid(n, period, origin)), dtype=float)
    else:
        samples = np.asarray(omega, dtype=float)
        if samples.ndim != 3 or len(set(samples.shape)) != 1:
            raise ValueError("3-form samples must be a cubic array")
        if closed:
            scale = max(float(np.max(np.abs(samples))), 1e-300)
            mismatch = max(
                float(np.max(np.abs(samples[-1] - samples[0]))),
                float(np.max(np.abs(samples[:, -1] - samples[:, 0]))),
                float(np.max(np.abs(samples[:, :, -1] - samples[:, :, 0]))),
            )
            if mismatch > periodicity_tol * scale:
                raise PeriodicityError(
                    f"boundary samples differ by {mismatch:.3g} (relative tol {periodicity_tol:g})"
                )
            samples = samples[:-1, :-1, :-1]
    n = samples.shape[0]
    value = _rule(samples, period)
    if n % 2 == 0 and n >= 2:
        err = abs(value - _rule(samples[::2, ::2, ::2], period))
    else:
        err = float("nan")
    return TorusIntegral(value, err, n, period)


@dataclass(frozen=True)
class BottProbe:
    integral: TorusIntegral
    max_abs_xi: float
    jacobi_j1: float  # max normalized |j . curl j| of the frame sections
    jacobi_j2: float


def bott_probe(v, n: int = 16, period: float | None = None, reference=(0.0, 0.0, 1.0),
               inner_cfg=None, outer_cfg=None) -> BottProbe:
    """Integral of ``Xi = (Gamma1 - Gamma2) ^ d Gamma1`` over the periodic box of ``v``.

    The global sections of ``Q`` are the adapted-frame vectors ``e2``, ``e3``
    built from ``reference``, which must stay away from ``+-e1`` on the whole
    box. ``Gamma_i`` are taken in the gauge ``Gamma_i(j_i#) = 0``. A nonzero
    integral certifies that ``Xi`` is not exact; a zero integral is evidence only.
    """
    from ..calc3 import DiffConfig
    from ..framekit import build_frame
    from .connection import big_gamma_form, curvature, xi

    period = period if period is not None else getattr(v, "period", None)
    if period is None:
        raise PeriodicityError("the field declares no period; pass one explicitly")
    inner_cfg = inner_cfg or DiffConfig(h=1e-4, order=4)
    outer_cfg = outer_cfg or DiffConfig(h=1e-3, order=4)
    grid = periodic_grid(n, period)
    frame = build_frame(v, region=grid.reshape(-1, 3), reference=reference)
    from ..calc3 import FormField, curl

    j1 = FormField(1, frame.unit(1))
    j2 = FormField(1, frame.unit(2))
    pts = grid.reshape(-1, 3)

    def jacobi(j):
        jx = j(pts)
        cj = curl(j.fn, pts, inner_cfg)
        return float(np.max(np.abs(np.einsum("...i,...i->...", jx, cj))
                            / (np.linalg.norm(cj, axis=-1) + 1e-300)))

    G1 = big_gamma_form(j1, inner_cfg, jacobi_threshold=None)
    G2 = big_gamma_form(j2, inner_cfg, jacobi_threshold=None)
    X = xi(G1, G2, curvature(G1, outer_cfg))
    samples = X(grid)
    return BottProbe(integrate_3form_torus(samples, period=period), float(np.max(np.abs(samples))), jacobi(j1), jacobi(j2))
