"""Poisson 1-forms, connections on the normal bundle, curvature and Xi.

Forms use the component conventions of :mod:`biham3d.calc3`: a 1-form and a
2-form are both 3-component arrays, ``a ^ b`` of 1-forms has the components of
``a x b`` and ``d`` is grad / curl / div.

Gauges. The connection forms are defined only up to multiples of the form they
act on; two explicit gauges are used:

* ``gamma`` solving ``dK_i = gamma ^ K_i`` for both ``i`` is the least-squares
  solution of 6 equations in 3 unknowns (unique when ``K1 ^ K2 != 0``);
* ``Gamma`` solving ``dj = Gamma ^ j`` for a single unit form is fixed by
  ``Gamma(j#) = 0``, giving ``Gamma = -i_{j#} dj / |j|^2``.

Gauge-dependent comparisons are wedged with the relevant form first.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..calc3 import DEFAULT_CFG, DiffConfig, FormField, curl, ext_deriv, wedge
from ..errors import DegeneratePairError, NotPoissonError

__all__ = [
    "ConnectionSample",
    "NormalPlane",
    "unit_poisson_forms",
    "fit_gamma",
    "fit_big_gamma",
    "gamma_form",
    "big_gamma_form",
    "curvature",
    "xi",
    "decomposability_residual",
    "form_compatibility_residual",
    "gauge_coherence_residual",
]

EPS_J = 1e-12
JACOBI_THRESHOLD = 1e-6


def _dot(a, b):
    return np.einsum("...i,...i->...", a, b)


def _skew(a):
    """Matrix of ``u -> a x u``."""
    z = np.zeros(a.shape[:-1])
    return np.stack(
        [
            np.stack([z, -a[..., 2], a[..., 1]], axis=-1),
            np.stack([a[..., 2], z, -a[..., 0]], axis=-1),
            np.stack([-a[..., 1], a[..., 0], z], axis=-1),
        ],
        axis=-2,
    )


@dataclass
class NormalPlane:
    """The plane ``Q_x = v(x)^perp`` with the complex structure "rotate +90 deg about e1"."""

    v: Callable
    eps_v: float = 1e-10

    def normal(self, x):
        vx = np.asarray(self.v(x), dtype=float)
        n = np.linalg.norm(vx, axis=-1, keepdims=True)
        if np.any(n < self.eps_v):
            from ..errors import VanishingFieldError

            raise VanishingFieldError("vector field vanishes; Q is undefined there")
        return vx / n

    def project(self, x, u):
        e1 = self.normal(x)
        u = np.asarray(u, dtype=float)
        return u - _dot(u, e1)[..., None] * e1

    def rotate(self, x, u):
        """Complex structure on ``Q_x``: ``u -> e1 x u``."""
        return np.cross(self.normal(x), u)


@dataclass
class ConnectionSample:
    """A connection 1-form sampled at points, with its fit diagnostics."""

    form: np.ndarray  # (..., 3)
    residual: np.ndarray  # (...,) Euclidean norm of the defining equation's residual
    gauge: str
    rank_deficient: np.ndarray | bool = False


def unit_poisson_forms(J1: Callable, J2: Callable, eps: float = EPS_J):
    """Metric duals of ``J_i / |J_i|`` as lazily evaluated 1-forms."""

    def unit(J):
        def fn(x):
            Jx = np.asarray(J(x), dtype=float)
            n = np.linalg.norm(Jx, axis=-1, keepdims=True)
            if np.any(n < eps):
                raise DegeneratePairError("Poisson field vanishes; its unit form is undefined")
            return Jx / n

        return FormField(1, fn, getattr(J, "contains", None))

    return unit(J1), unit(J2)


def _as_one_form(K):
    return K if isinstance(K, FormField) else FormField(1, K, getattr(K, "contains", None))


def fit_gamma(K1, K2, x, cfg: DiffConfig = DEFAULT_CFG, rank_tol: float = 1e-10) -> ConnectionSample:
    """Solve ``dK_i = gamma ^ K_i`` (i = 1, 2) for ``gamma`` by minimal-norm least squares."""
    K1, K2 = _as_one_form(K1), _as_one_form(K2)
    x = np.asarray(x, dtype=float)
    k1, k2 = K1(x), K2(x)
    d1, d2 = curl(K1.fn, x, cfg), curl(K2.fn, x, cfg)
    # gamma x K = -[K]_x gamma
    A = np.concatenate([-_skew(k1), -_skew(k2)], axis=-2)
    b = np.concatenate([d1, d2], axis=-1)
    U, S, Vt = np.linalg.svd(A, full_matrices=False)
    scale = S[..., :1]
    keep = S > rank_tol * np.maximum(scale, 1e-300)
    inv = np.where(keep, 1.0 / np.where(keep, S, 1.0), 0.0)
    g = np.einsum("...ji,...j,...kj,...k->...i", Vt, inv, U, b)
    res = np.linalg.norm(np.einsum("...ij,...j->...i", A, g) - b, axis=-1)
    return ConnectionSample(g, res, "minimal-norm", ~np.all(keep, axis=-1))


def _big_gamma_values(j, x, cfg, jacobi_threshold):
    jx = j(x)
    dj = curl(j.fn, x, cfg)
    n2 = _dot(jx, jx)
    if jacobi_threshold is not None:
        jac = np.abs(_dot(jx, dj)) / (np.sqrt(n2) * np.linalg.norm(dj, axis=-1) + 1e-300)
        if np.any(jac > jacobi_threshold):
            raise NotPoissonError(
                f"j ^ dj does not vanish (normalized residual {np.max(jac):.3g} > {jacobi_threshold:g})"
            )
    # i_{j#} dj = dj x j for a 2-form in this basis
    G = -np.cross(dj, jx) / n2[..., None]
    return G, jx, dj


def fit_big_gamma(j, x, cfg: DiffConfig = DEFAULT_CFG,
                  jacobi_threshold: float | None = JACOBI_THRESHOLD) -> ConnectionSample:
    """``Gamma = -i_{j#} dj / |j|^2``; residual is ``|dj - Gamma ^ j|``."""
    j = _as_one_form(j)
    G, jx, dj = _big_gamma_values(j, np.asarray(x, dtype=float), cfg, jacobi_threshold)
    res = np.linalg.norm(dj - np.cross(G, jx), axis=-1)
    return ConnectionSample(G, res, "Gamma(j#)=0")


def gamma_form(K1, K2, cfg: DiffConfig = DEFAULT_CFG) -> FormField:
    """``gamma`` as a lazily evaluated 1-form (so it can be differentiated again)."""
    K1, K2 = _as_one_form(K1), _as_one_form(K2)
    return FormField(1, lambda x: fit_gamma(K1, K2, x, cfg).form, K1.contains)


def big_gamma_form(j, cfg: DiffConfig = DEFAULT_CFG,
                   jacobi_threshold: float | None = JACOBI_THRESHOLD) -> FormField:
    j = _as_one_form(j)
    return FormField(1, lambda x: _big_gamma_values(j, x, cfg, jacobi_threshold)[0], j.contains)


def curvature(gamma: FormField, cfg: DiffConfig = DEFAULT_CFG) -> FormField:
    """``kappa = d Gamma``."""
    return ext_deriv(_as_one_form(gamma), cfg)


def xi(gamma1: FormField, gamma2: FormField, kappa: FormField) -> FormField:
    """``Xi = (Gamma1 - Gamma2) ^ kappa``."""
    return wedge(_as_one_form(gamma1) - _as_one_form(gamma2), kappa)


def decomposability_residual(kappa: FormField, j, x, normalized: bool = False):
    """``|kappa ^ j|``; zero iff ``kappa`` is a multiple of ``j ^ (.)``.

    Absolute by default: for local pairs ``kappa`` itself is close to zero and a
    ratio would only measure discretization noise. ``normalized=True`` divides
    by ``|kappa|``.
    """
    j = _as_one_form(j)
    k = kappa(x)
    r = np.abs(_dot(k, j(x)))
    if normalized:
        r = r / (np.linalg.norm(k, axis=-1) + 1e-300)
    return r


def form_compatibility_residual(j1, j2, x, cfg: DiffConfig = DEFAULT_CFG):
    """Coefficient of the 3-form ``j1 ^ dj2 + j2 ^ dj1``."""
    j1, j2 = _as_one_form(j1), _as_one_form(j2)
    return _dot(j1(x), curl(j2.fn, x, cfg)) + _dot(j2(x), curl(j1.fn, x, cfg))


def gauge_coherence_residual(J: Callable, beta: FormField, x, cfg: DiffConfig = DEFAULT_CFG,
                             jacobi_threshold: float | None = JACOBI_THRESHOLD):
    """``|(Gamma - beta + d ln|J|) ^ j|`` for the unit form ``j`` of ``J``.

    ``beta`` is the connection with ``dJ = beta ^ J``; the wedge removes the
    gauge freedom along ``j``.
    """
    x = np.asarray(x, dtype=float)
    (j, _) = unit_poisson_forms(J, J)
    G = fit_big_gamma(j, x, cfg, jacobi_threshold).form

    def log_norm(p):
        return np.log(np.linalg.norm(J(p), axis=-1))

    log_norm.contains = getattr(J, "contains", None)
    dl = ext_deriv(FormField(0, log_norm), cfg)(x)
    return np.linalg.norm(np.cross(G - beta(x) + dl, j(x)), axis=-1)
