"""Analytic vector fields with exact Jacobians, and the named-field registry."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ScenarioError

__all__ = ["AnalyticVectorField", "registry", "make_field"]


@dataclass(frozen=True)
class AnalyticVectorField:
    """A vector field ``v`` on a chart domain.

    ``fn`` and ``jac`` are vectorised over leading axes. ``domain`` is an
    optional predicate; points where it is false are outside the chart.
    ``period`` marks fields that are periodic with that period in every
    coordinate (the torus probes need it).
    """

    name: str
    fn: Callable
    jac: Optional[Callable] = None
    domain: Optional[Callable] = None
    period: Optional[float] = None
    params: dict = field(default_factory=dict)

    def __call__(self, x):
        return np.asarray(self.fn(np.asarray(x, dtype=float)), dtype=float)

    @property
    def jacobian(self):
        # exposed as attribute so calc3's exact backend can find it
        if self.jac is None:
            return None
        return lambda x: np.asarray(self.jac(np.asarray(x, dtype=float)), dtype=float)

    @property
    def contains(self):
        return self.domain

    def speed(self, x):
        return np.linalg.norm(self(x), axis=-1)


def _stack(*cols):
    shape = np.broadcast_shapes(*(np.shape(c) for c in cols))
    out = np.empty(shape + (len(cols),))
    for k, c in enumerate(cols):
        out[..., k] = c
    return out


def _constant(direction=(1.0, 0.0, 0.0)):
    d = np.asarray(direction, dtype=float)

    def fn(x):
        return np.broadcast_to(d, np.shape(x)).copy()

    def jac(x):
        return np.zeros(np.shape(x)[:-1] + (3, 3))

    return AnalyticVectorField("constant", fn, jac, params={"direction": d.tolist()})


def _radial(r_min=1e-3):
    def fn(x):
        r = np.linalg.norm(x, axis=-1, keepdims=True)
        return x / r

    def jac(x):
        r = np.linalg.norm(x, axis=-1)[..., None, None]
        u = x[..., :, None] / r
        return (np.eye(3) - u * np.swapaxes(u, -1, -2)) / r

    def domain(x):
        return np.linalg.norm(x, axis=-1) > r_min

    return AnalyticVectorField("radial", fn, jac, domain, params={"r_min": r_min})


def _rotation(eps=0.0, r_min=1e-3):
    def fn(x):
        return _stack(-x[..., 1], x[..., 0], eps + 0.0 * x[..., 2])

    def jac(x):
        J = np.zeros(np.shape(x)[:-1] + (3, 3))
        J[..., 0, 1] = -1.0
        J[..., 1, 0] = 1.0
        return J

    def domain(x):
        # the speed sqrt(x^2 + y^2 + eps^2) must stay away from zero
        return np.hypot(np.hypot(x[..., 0], x[..., 1]), eps) > r_min

    return AnalyticVectorField("rotation", fn, jac, domain, params={"eps": eps, "r_min": r_min})


def _shear(rate=0.5):
    def fn(x):
        return _stack(1.0 + 0.0 * x[..., 0], rate * x[..., 0], 0.0 * x[..., 0])

    def jac(x):
        J = np.zeros(np.shape(x)[:-1] + (3, 3))
        J[..., 1, 0] = rate
        return J

    return AnalyticVectorField("shear", fn, jac, params={"rate": rate})


def _abc(A=1.0, B=1.0, C=1.0):
    def fn(x):
        X, Y, Z = x[..., 0], x[..., 1], x[..., 2]
        return _stack(
            A * np.sin(Z) + C * np.cos(Y),
            B * np.sin(X) + A * np.cos(Z),
            C * np.sin(Y) + B * np.cos(X),
        )

    def jac(x):
        X, Y, Z = x[..., 0], x[..., 1], x[..., 2]
        J = np.zeros(np.shape(x)[:-1] + (3, 3))
        J[..., 0, 1] = -C * np.sin(Y)
        J[..., 0, 2] = A * np.cos(Z)
        J[..., 1, 0] = B * np.cos(X)
        J[..., 1, 2] = -A * np.sin(Z)
        J[..., 2, 0] = -B * np.sin(X)
        J[..., 2, 1] = C * np.cos(Y)
        return J

    return AnalyticVectorField("abc", fn, jac, period=2 * np.pi, params={"A": A, "B": B, "C": C})


def _periodic_beltrami(k=1.0):
    """``(sin kz, cos kz, 0)``: unit speed, curl v = k v, period 2 pi / k."""

    def fn(x):
        Z = k * x[..., 2]
        return _stack(np.sin(Z), np.cos(Z), 0.0 * Z)

    def jac(x):
        Z = k * x[..., 2]
        J = np.zeros(np.shape(x)[:-1] + (3, 3))
        J[..., 0, 2] = k * np.cos(Z)
        J[..., 1, 2] = -k * np.sin(Z)
        return J

    return AnalyticVectorField(
        "periodic_beltrami", fn, jac, period=2 * np.pi / k, params={"k": k}
    )


def _tilted_periodic(k=1, eps=0.3):
    """``(sin kz, cos kz, eps sin(x + y))``; never parallel to the z-axis when ``eps < 1``."""
    if int(k) != k:
        raise TypeError("k must be an integer so the field is 2 pi periodic")

    def fn(x):
        Z = k * x[..., 2]
        return _stack(np.sin(Z), np.cos(Z), eps * np.sin(x[..., 0] + x[..., 1]))

    def jac(x):
        Z = k * x[..., 2]
        c = eps * np.cos(x[..., 0] + x[..., 1])
        J = np.zeros(np.shape(x)[:-1] + (3, 3))
        J[..., 0, 2] = k * np.cos(Z)
        J[..., 1, 2] = -k * np.sin(Z)
        J[..., 2, 0] = c
        J[..., 2, 1] = c
        return J

    return AnalyticVectorField("tilted_periodic", fn, jac, period=2 * np.pi, params={"k": k, "eps": eps})


_REGISTRY = {
    "constant": _constant,
    "radial": _radial,
    "rotation": _rotation,
    "shear": _shear,
    "abc": _abc,
    "periodic_beltrami": _periodic_beltrami,
    "tilted_periodic": _tilted_periodic,
}


def registry() -> list[str]:
    """Names of the built-in analytic fields."""
    return sorted(_REGISTRY)


def make_field(name: str, **params) -> AnalyticVectorField:
    try:
        factory = _REGISTRY[name]
    except KeyError:
        raise ScenarioError(f"unknown field {name!r}; known fields: {registry()}") from None
    try:
        return factory(**params)
    except TypeError as exc:
        raise ScenarioError(f"bad parameters for field {name!r}: {exc}") from None
