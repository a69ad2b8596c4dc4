"""First Chern number of the normal bundle ``Q = v^perp`` over a closed surface.

Discrete holonomy: at every vertex pick a unit reference vector in ``Q``;
for every directed edge ``a -> b`` transport the reference at ``a`` into the
fiber at ``b`` and record its angle ``omega_ab`` to the reference at ``b``,
measured about ``e1(b)``. A triangle's holonomy is ``omega_ab + omega_bc +
omega_ca`` reduced to ``(-pi, pi]``. Summed over the surface the unreduced
angles cancel pairwise, so the total is ``2 pi`` times the Chern number.

Transport is by default the minimal rotation taking ``e1(a)`` to ``e1(b)``,
which makes ``omega_ba = -omega_ab`` hold exactly. Orthogonal projection
between the fibers is available as ``transport="projection"``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import MeshError, VanishingFieldError
from .mesh import TriangulatedSurface

__all__ = ["ChernResult", "chern_number", "reference_section"]

MAX_FIBER_ANGLE = np.pi / 2
MAX_HOLONOMY = np.pi / 2


@dataclass(frozen=True)
class ChernResult:
    integer: int
    real: float
    defect: float
    max_fiber_angle: float
    max_holonomy: float

    def __iter__(self):
        return iter((self.integer, self.real))


def reference_section(n):
    """A unit vector orthogonal to each row of ``n``, from the least aligned coordinate axis."""
    axes = np.eye(3)
    pick = axes[np.argmin(np.abs(n), axis=-1)]
    u = pick - np.einsum("...i,...i->...", pick, n)[..., None] * n
    return u / np.linalg.norm(u, axis=-1, keepdims=True)


def _rotate_minimal(na, nb, u):
    c = np.einsum("...i,...i->...", na, nb)[..., None]
    k = np.cross(na, nb)
    return u * c + np.cross(k, u) + k * np.einsum("...i,...i->...", k, u)[..., None] / (1.0 + c)


def _wrap(a):
    return np.pi - np.mod(np.pi - a, 2 * np.pi)


def chern_number(v, surface: TriangulatedSurface, transport: str = "rotation", eps_v: float = 1e-10,
                 max_fiber_angle: float = MAX_FIBER_ANGLE, max_holonomy: float = MAX_HOLONOMY,
                 validate: bool = True) -> ChernResult:
    """Integer Chern number of ``Q`` restricted to ``surface`` and its pre-rounding value.

    Raises :class:`MeshError` ("refine the mesh") when neighbouring fibers
    differ by more than ``max_fiber_angle`` or a triangle's holonomy exceeds
    ``max_holonomy``, where the reduction modulo ``2 pi`` becomes ambiguous.
    """
    if transport not in ("rotation", "projection"):
        raise ValueError(f"unknown transport {transport!r}")
    if validate:
        surface.validate()
    vx = np.asarray(v(surface.vertices), dtype=float)
    speed = np.linalg.norm(vx, axis=-1)
    if np.any(speed < eps_v):
        k = int(np.argmin(speed))
        raise VanishingFieldError(f"|v| < {eps_v:g} at mesh vertex {k} {surface.vertices[k].tolist()}")
    n = vx / speed[:, None]
    u = reference_section(n)
    w = np.cross(n, u)

    f = surface.faces
    src = f.reshape(-1)
    dst = np.roll(f, -1, axis=1).reshape(-1)
    cosang = np.clip(np.einsum("ij,ij->i", n[src], n[dst]), -1.0, 1.0)
    fiber = float(np.max(np.arccos(cosang))) if len(cosang) else 0.0
    if fiber >= max_fiber_angle:
        raise MeshError(
            f"adjacent fibers differ by {fiber:.3g} rad (>= {max_fiber_angle:.3g}); refine the mesh"
        )
    if transport == "rotation":
        t = _rotate_minimal(n[src], n[dst], u[src])
    else:
        t = u[src] - np.einsum("ij,ij->i", u[src], n[dst])[:, None] * n[dst]
    omega = np.arctan2(np.einsum("ij,ij->i", t, w[dst]), np.einsum("ij,ij->i", t, u[dst]))
    hol = _wrap(omega.reshape(-1, 3).sum(axis=1))
    hmax = float(np.max(np.abs(hol))) if len(hol) else 0.0
    if hmax > max_holonomy:
        raise MeshError(f"triangle holonomy {hmax:.3g} rad exceeds {max_holonomy:.3g}; refine the mesh")
    real = float(np.sum(hol)) / (2 * np.pi)
    integer = int(np.rint(real))
    return ChernResult(integer, real, abs(real - integer), fiber, hmax)
