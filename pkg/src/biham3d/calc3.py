"""Vector calculus and exterior algebra on three-dimensional chart domains.

Every operation is vectorised over leading axes: points are arrays of shape
``(..., 3)``. Fields are plain callables mapping such arrays to ``(...)``
(scalars) or ``(..., 3)`` (vectors). A callable may additionally carry

* ``contains(x) -> bool array``: domain predicate, checked on stencils;
* ``jacobian(x)`` / ``gradient(x)``: exact derivatives for the
  ``"exact"`` backend.

Differential forms are stored in the coordinate coframe. Components of a
2-form are ordered ``(dy^dz, dz^dx, dx^dy)``, so that the Euclidean Hodge
star is the identity on component arrays and ``flat(a) ^ flat(b)`` has the
components of ``a x b``. The volume form is ``dx^dy^dz``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import DomainError

__all__ = [
    "DiffConfig",
    "FormField",
    "jacobian",
    "grad",
    "curl",
    "div",
    "ext_deriv",
    "wedge",
    "hodge",
    "contract",
    "flat",
    "sharp",
    "volume_form",
    "normalize",
]

# (offset multiplier, weight) pairs for central first-derivative stencils
_STENCILS = {
    2: ((-1.0, -0.5), (1.0, 0.5)),
    4: ((-2.0, 1.0 / 12.0), (-1.0, -8.0 / 12.0), (1.0, 8.0 / 12.0), (2.0, -1.0 / 12.0)),
}


@dataclass(frozen=True)
class DiffConfig:
    """Differentiation backend selection.

    ``backend`` is ``"fd"`` (central finite differences) or ``"exact"``
    (derivatives supplied by the field itself).
    """

    backend: str = "fd"
    h: float = 1e-4
    order: int = 2

    def __post_init__(self):
        if self.backend not in ("fd", "exact"):
            raise ValueError(f"unknown differentiation backend {self.backend!r}")
        if not self.h > 0:
            raise ValueError("step h must be positive")
        if self.order not in _STENCILS:
            raise ValueError("stencil order must be 2 or 4")

    def scaled(self, factor: float) -> "DiffConfig":
        return DiffConfig(self.backend, self.h * factor, self.order)


DEFAULT_CFG = DiffConfig()


def normalize(v, axis: int = -1):
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v, axis=axis, keepdims=True)


def _check_domain(f, pts):
    contains = getattr(f, "contains", None)
    if contains is None:
        return
    ok = np.asarray(contains(pts))
    if not np.all(ok):
        bad = np.asarray(pts).reshape(-1, 3)[~ok.reshape(-1)][0]
        raise DomainError(f"stencil point {bad.tolist()} lies outside the field domain")


def _fd_jacobian(f, x, cfg: DiffConfig):
    x = np.asarray(x, dtype=float)
    stencil = _STENCILS[cfg.order]
    eye = np.eye(3)
    offsets = np.array([m * cfg.h * eye[k] for k in range(3) for m, _ in stencil])
    pts = x[None, ...] + offsets.reshape((len(offsets),) + (1,) * (x.ndim - 1) + (3,))
    _check_domain(f, pts)
    vals = np.asarray(f(pts), dtype=float)
    n = len(stencil)
    weights = np.array([w for _, w in stencil])
    cols = []
    for k in range(3):
        block = vals[k * n:(k + 1) * n]
        cols.append(np.tensordot(weights, block, axes=(0, 0)) / cfg.h)
    # scalar field -> (..., 3); vector field -> (..., m, 3)
    return np.stack(cols, axis=-1)


def jacobian(V: Callable, x, cfg: DiffConfig = DEFAULT_CFG):
    """Return ``J[..., i, k] = dV_i/dx_k`` (or the gradient for scalar fields)."""
    if cfg.backend == "exact":
        x = np.asarray(x, dtype=float)
        _check_domain(V, x)
        jac = getattr(V, "jacobian", None) or getattr(V, "gradient", None)
        if jac is None:
            raise ValueError("exact backend requested but the field supplies no derivative")
        return np.asarray(jac(x), dtype=float)
    return _fd_jacobian(V, x, cfg)


def grad(f: Callable, x, cfg: DiffConfig = DEFAULT_CFG):
    return jacobian(f, x, cfg)


def curl(V: Callable, x, cfg: DiffConfig = DEFAULT_CFG):
    J = jacobian(V, x, cfg)
    return np.stack(
        [
            J[..., 2, 1] - J[..., 1, 2],
            J[..., 0, 2] - J[..., 2, 0],
            J[..., 1, 0] - J[..., 0, 1],
        ],
        axis=-1,
    )


def div(V: Callable, x, cfg: DiffConfig = DEFAULT_CFG):
    J = jacobian(V, x, cfg)
    return J[..., 0, 0] + J[..., 1, 1] + J[..., 2, 2]


# --------------------------------------------------------------------------
# forms


class FormField:
    """A differential form of grade 0..3 given by a component callable.

    Grade 0 and 3 forms evaluate to arrays of shape ``(...)``; grade 1 and 2
    forms evaluate to ``(..., 3)``. Evaluation is deterministic.
    """

    def __init__(self, grade: int, fn: Callable, contains: Optional[Callable] = None):
        if grade not in (0, 1, 2, 3):
            raise ValueError(f"form grade must be in 0..3, got {grade}")
        self.grade = grade
        self.fn = fn
        if contains is None:
            contains = getattr(fn, "contains", None)
        self.contains = contains

    def __call__(self, x):
        return np.asarray(self.fn(np.asarray(x, dtype=float)), dtype=float)

    def __repr__(self):
        return f"FormField(grade={self.grade})"

    def _combine(self, other, op):
        if isinstance(other, FormField):
            if other.grade != self.grade:
                raise ValueError("cannot add forms of different grade")
            return FormField(self.grade, lambda x: op(self(x), other(x)), self.contains)
        return NotImplemented

    def __add__(self, other):
        return self._combine(other, np.add)

    def __sub__(self, other):
        return self._combine(other, np.subtract)

    def __neg__(self):
        return FormField(self.grade, lambda x: -self(x), self.contains)

    def scale(self, g: Callable | float) -> "FormField":
        """Multiply by a scalar function or constant."""
        if callable(g):
            if self.grade in (1, 2):
                fn = lambda x: np.asarray(g(x))[..., None] * self(x)
            else:
                fn = lambda x: np.asarray(g(x)) * self(x)
        else:
            fn = lambda x: g * self(x)
        return FormField(self.grade, fn, self.contains)

    @staticmethod
    def constant(grade: int, components) -> "FormField":
        comps = np.asarray(components, dtype=float)

        def fn(x):
            shape = np.shape(x)[:-1]
            if grade in (1, 2):
                return np.broadcast_to(comps, shape + (3,)).copy()
            return np.full(shape, float(comps))

        return FormField(grade, fn)


def volume_form() -> FormField:
    return FormField.constant(3, 1.0)


def _as_form(f, contains=None):
    if isinstance(f, FormField):
        return f
    return FormField(0, f, contains)


def ext_deriv(form: FormField, cfg: DiffConfig = DEFAULT_CFG) -> FormField:
    """Exterior derivative as a lazily evaluated form of grade + 1."""
    if form.grade > 2:
        raise ValueError("exterior derivative of a 3-form vanishes identically in 3D")
    fn = form.fn
    if form.contains is not None and getattr(fn, "contains", None) is None:
        fn = _with_domain(fn, form.contains)
    if form.grade == 0:
        return FormField(1, lambda x: grad(fn, x, cfg), form.contains)
    if form.grade == 1:
        return FormField(2, lambda x: curl(fn, x, cfg), form.contains)
    return FormField(3, lambda x: div(fn, x, cfg), form.contains)


def _with_domain(fn, contains):
    def wrapped(x):
        return fn(x)

    wrapped.contains = contains
    return wrapped


def _wedge_values(k, a, l, b):
    if k == 0:
        return a[..., None] * b if l in (1, 2) else a * b
    if l == 0:
        return _wedge_values(0, b, k, a)
    if k == 1 and l == 1:
        return np.cross(a, b)
    if (k, l) in ((1, 2), (2, 1)):
        return np.einsum("...i,...i->...", a, b)
    raise ValueError(f"wedge of grades {k} and {l} exceeds dimension 3")


def wedge(omega: FormField, eta: FormField) -> FormField:
    k, l = omega.grade, eta.grade
    if k + l > 3:
        raise ValueError(f"wedge of grades {k} and {l} exceeds dimension 3")
    return FormField(k + l, lambda x: _wedge_values(k, omega(x), l, eta(x)), omega.contains)


def hodge(omega: FormField) -> FormField:
    """Euclidean Hodge star; identity on component arrays in this basis."""
    return FormField(3 - omega.grade, omega.fn, omega.contains)


def _contract_values(V, k, w):
    if k == 1:
        return np.einsum("...i,...i->...", w, V)
    if k == 2:
        return np.cross(w, V)
    if k == 3:
        return w[..., None] * V
    raise ValueError("cannot contract a vector into a 0-form")


def contract(V: Callable, omega: FormField) -> FormField:
    """Interior product ``i_V omega``."""
    if omega.grade == 0:
        raise ValueError("cannot contract a vector into a 0-form")
    k = omega.grade
    return FormField(k - 1, lambda x: _contract_values(np.asarray(V(x)), k, omega(x)), omega.contains)


def flat(V: Callable) -> FormField:
    """Metric-dual 1-form of a vector field (Euclidean)."""
    return FormField(1, lambda x: np.asarray(V(x), dtype=float), getattr(V, "contains", None))


def sharp(omega: FormField) -> Callable:
    if omega.grade != 1:
        raise ValueError("sharp is defined for 1-forms only")
    return omega.fn
