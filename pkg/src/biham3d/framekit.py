"""Adapted orthonormal frames and their structure functions.

The frame is ``e1 = v/|v|``, ``e2`` = Gram-Schmidt of a fixed reference axis
against ``e1``, ``e3 = e1 x e2``, so ``e1 . (e2 x e3) = +1`` everywhere.
Structure functions are stored as ``C[..., k, i, j]`` with zero-based
indices, meaning ``[e_i, e_j] = C^k_ij e_k``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .calc3 import DEFAULT_CFG, DiffConfig, jacobian
from .errors import FrameDegeneracyError, VanishingFieldError

__all__ = ["AdaptedFrame", "StructureFunctions", "bracket", "build_frame", "structure_functions", "transport_coefficients"]

EPS_V = 1e-10
DEGENERACY_ANGLE = 1e-3


@dataclass(frozen=True)
class StructureFunctions:
    c: np.ndarray  # (..., 3, 3, 3), antisymmetric in the last two axes

    def get(self, k: int, i: int, j: int):
        """One-based accessor, ``get(3, 1, 2)`` is C^3_12."""
        return self.c[..., k - 1, i - 1, j - 1]

    def independent(self):
        """The nine scalars C^k_ij with i < j, ordered by (k, (i, j))."""
        pairs = [(0, 1), (0, 2), (1, 2)]
        return np.stack([self.c[..., k, i, j] for k in range(3) for i, j in pairs], axis=-1)


class AdaptedFrame:
    """Orthonormal frame adapted to a nonvanishing vector field."""

    def __init__(self, v, reference=(0.0, 0.0, 1.0), eps_v: float = EPS_V):
        self.v = v
        self.reference = np.asarray(reference, dtype=float) / np.linalg.norm(reference)
        self.eps_v = eps_v

    @property
    def contains(self):
        return getattr(self.v, "contains", None)

    def _e1(self, x):
        vx = np.asarray(self.v(x), dtype=float)
        speed = np.linalg.norm(vx, axis=-1, keepdims=True)
        if np.any(speed < self.eps_v):
            raise VanishingFieldError("vector field vanishes (|v| < eps_v) at an evaluation point")
        return vx / speed, vx, speed

    def axes(self, x):
        """Frame at ``x`` as an array ``(..., 3, 3)`` whose rows are e1, e2, e3."""
        x = np.asarray(x, dtype=float)
        e1, _, _ = self._e1(x)
        a = self.reference
        w = a - (e1 @ a)[..., None] * e1
        e2 = w / np.linalg.norm(w, axis=-1, keepdims=True)
        e3 = np.cross(e1, e2)
        return np.stack([e1, e2, e3], axis=-2)

    def e1(self, x):
        return self._e1(np.asarray(x, dtype=float))[0]

    def e2(self, x):
        return self.axes(x)[..., 1, :]

    def e3(self, x):
        return self.axes(x)[..., 2, :]

    def unit(self, index: int):
        """Callable for a single frame vector (0-based), carrying the domain."""

        def fn(x):
            return self.axes(x)[..., index, :]

        fn.contains = self.contains
        return fn

    def derivatives(self, x, cfg: DiffConfig = DEFAULT_CFG):
        """``D[..., a, i, k] = d(e_a)_i / dx_k``."""
        x = np.asarray(x, dtype=float)
        if cfg.backend == "exact":
            return self._exact_derivatives(x)
        fn = lambda p: self.axes(p).reshape(np.shape(p)[:-1] + (9,))
        fn.contains = self.contains
        D = jacobian(fn, x, cfg)
        return D.reshape(np.shape(x)[:-1] + (3, 3, 3))

    def _exact_derivatives(self, x):
        jac = getattr(self.v, "jacobian", None)
        if jac is None:
            raise ValueError("exact backend requested but the field has no Jacobian")
        Dv = jac(x)
        e1, _, speed = self._e1(x)
        eye = np.eye(3)
        P1 = eye - e1[..., :, None] * e1[..., None, :]
        De1 = P1 @ Dv / speed[..., None]
        a = self.reference
        c = e1 @ a
        w = a - c[..., None] * e1
        wn = np.linalg.norm(w, axis=-1)
        e2 = w / wn[..., None]
        # dc/dx_k = a . De1[:, k]
        dc = np.einsum("i,...ik->...k", a, De1)
        Dw = -(e1[..., :, None] * dc[..., None, :]) - c[..., None, None] * De1
        P2 = eye - e2[..., :, None] * e2[..., None, :]
        De2 = P2 @ Dw / wn[..., None, None]
        De3 = np.cross(De1, e2[..., :, None], axisa=-2, axisb=-2, axisc=-2) + np.cross(
            e1[..., :, None], De2, axisa=-2, axisb=-2, axisc=-2
        )
        return np.stack([De1, De2, De3], axis=-3)

    def check_region(self, points):
        """Raise if ``v`` vanishes or the reference axis degenerates on ``points``."""
        pts = np.asarray(points, dtype=float).reshape(-1, 3)
        vx = np.asarray(self.v(pts), dtype=float)
        speed = np.linalg.norm(vx, axis=-1)
        if np.any(speed < self.eps_v):
            bad = pts[np.argmin(speed)]
            raise VanishingFieldError(f"|v| < {self.eps_v:g} at {bad.tolist()}")
        e1 = vx / speed[:, None]
        cosang = np.abs(e1 @ self.reference)
        if np.any(cosang > np.cos(DEGENERACY_ANGLE)):
            axes = np.eye(3)
            worst = np.max(np.abs(e1 @ axes.T), axis=0)
            suggestion = axes[int(np.argmin(worst))]
            raise FrameDegeneracyError(
                "reference axis within 1e-3 rad of +-e1 on the region; "
                f"try reference axis {suggestion.tolist()}",
                suggested_axis=suggestion,
            )


def build_frame(v, region=None, reference=(0.0, 0.0, 1.0), eps_v: float = EPS_V) -> AdaptedFrame:
    """Adapted frame for ``v``; validates it on ``region`` sample points if given."""
    frame = AdaptedFrame(v, reference, eps_v)
    if region is not None:
        frame.check_region(region)
    return frame


def structure_functions(frame: AdaptedFrame, x, cfg: DiffConfig = DEFAULT_CFG) -> StructureFunctions:
    """Project frame brackets onto the frame: ``C^k_ij = <[e_i, e_j], e_k>``."""
    x = np.asarray(x, dtype=float)
    E = frame.axes(x)
    D = frame.derivatives(x, cfg)
    c = np.zeros(np.shape(x)[:-1] + (3, 3, 3))
    for i, j in ((0, 1), (0, 2), (1, 2)):
        # [e_i, e_j] = (D e_j) e_i - (D e_i) e_j
        br = np.einsum("...ak,...k->...a", D[..., j, :, :], E[..., i, :]) - np.einsum(
            "...ak,...k->...a", D[..., i, :, :], E[..., j, :]
        )
        proj = np.einsum("...ka,...a->...k", E, br)
        c[..., :, i, j] = proj
        c[..., :, j, i] = -proj
    return StructureFunctions(c)


def bracket(frame: AdaptedFrame, i: int, j: int, x, cfg: DiffConfig = DEFAULT_CFG):
    """Directly differenced ``[e_i, e_j]`` (zero-based) as an ambient vector."""
    x = np.asarray(x, dtype=float)
    E = frame.axes(x)
    D = frame.derivatives(x, cfg)
    return np.einsum("...ak,...k->...a", D[..., j, :, :], E[..., i, :]) - np.einsum(
        "...ak,...k->...a", D[..., i, :, :], E[..., j, :]
    )


def transport_coefficients(frame: AdaptedFrame, x, cfg: DiffConfig = DEFAULT_CFG, with_e1: bool = False):
    """The four structure functions that drive mu and alpha along the flow.

    Returns ``(C^2_31, C^3_31, C^2_12, C^3_12)``, preceded by ``e1`` when
    ``with_e1`` is set. With the exact backend they come from projections of
    ``Dv`` onto the frame, without forming the full bracket tensor.
    """
    x = np.asarray(x, dtype=float)
    if cfg.backend != "exact":
        c = structure_functions(frame, x, cfg).c
        out = (c[..., 1, 2, 0], c[..., 2, 2, 0], c[..., 1, 0, 1], c[..., 2, 0, 1])
        return ((frame.e1(x),) + out) if with_e1 else out
    jac = getattr(frame.v, "jacobian", None)
    if jac is None:
        raise ValueError("exact backend requested but the field has no Jacobian")
    e1, _, speed = frame._e1(x)
    a = frame.reference
    c = e1 @ a
    w = a - c[..., None] * e1
    wn = np.linalg.norm(w, axis=-1)
    e2 = w / wn[..., None]
    e3 = np.cross(e1, e2)
    Dv = jac(x)
    # M[j, k] = e_j . (D e1) e_k for j in {2, 3}; P1 drops out because e_j is normal to e1
    D2 = np.matmul(e2[..., None, :], Dv)[..., 0, :] / speed
    D3 = np.matmul(e3[..., None, :], Dv)[..., 0, :] / speed
    dot = lambda p, q: np.einsum("...i,...i->...", p, q)
    # e3 . (D e2) e1, from differentiating e2 = w/|w| with w = a - (a.e1) e1
    d = -c * dot(D3, e1) / wn
    c231 = dot(D2, e3) + d
    c331 = dot(D3, e3)
    c212 = -dot(D2, e2)
    c312 = d - dot(D3, e2)
    out = (c231, c331, c212, c312)
    return ((e1,) + out) if with_e1 else out
