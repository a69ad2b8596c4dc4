"""Riccati and scaling equations along streamlines.

The Poisson direction ``mu`` obeys ``dmu/ds = A + B mu + C mu^2`` with

    A = -C^2_31,   B = -(C^3_31 + C^2_12),   C = -C^3_12,

and the scale obeys ``d/ds ln(alpha/|v|) = C^3_31 + mu C^3_12``.

``mu`` is integrated through the linear lift ``mu = p/q``::

    p' = B p + A q,     q' = -C p,

renormalising ``(p, q)`` to unit length after every step, so finite-arclength
blow-ups of ``mu`` are crossed without trouble.

Coefficients live on a *half-step* grid ``s_0, s_0 + ds/2, s_0 + ds, ...`` so
that the RK4 stage values are samples rather than interpolants. Every array
may carry trailing batch axes (one column per streamline).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .calc3 import DEFAULT_CFG, DiffConfig
from .errors import SpanSplitError
from .framekit import AdaptedFrame, transport_coefficients

__all__ = [
    "RiccatiCoefficients",
    "ProjectiveSolution",
    "ScalingSolution",
    "riccati_coeffs",
    "solve_mu",
    "solve_mu_direct",
    "solve_alpha",
    "compatibility_residual",
    "lemma3_check",
    "Lemma3Result",
    "streamline_coefficients",
    "derivative",
]

EPS_Q = 1e-8


@dataclass(frozen=True)
class RiccatiCoefficients:
    s: np.ndarray  # half-step grid, length 2n + 1
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        if len(self.s) % 2 != 1:
            raise ValueError("coefficients must be sampled on a half-step grid of odd length")
        for arr in (self.a, self.b, self.c):
            if not np.all(np.isfinite(arr)):
                raise ValueError("Riccati coefficients must be finite")

    @property
    def nodes(self):
        return self.s[::2]

    @classmethod
    def from_functions(cls, fa: Callable, fb: Callable, fc: Callable, s_nodes) -> "RiccatiCoefficients":
        s = half_grid(s_nodes)
        return cls(s, np.asarray(fa(s), float) + 0 * s, np.asarray(fb(s), float) + 0 * s,
                   np.asarray(fc(s), float) + 0 * s)

    def rhs(self, mu, idx=None):
        a, b, c = (self.a, self.b, self.c) if idx is None else (self.a[idx], self.b[idx], self.c[idx])
        return a + b * mu + c * mu * mu


def half_grid(s_nodes):
    s_nodes = np.asarray(s_nodes, dtype=float)
    out = np.empty(2 * len(s_nodes) - 1)
    out[::2] = s_nodes
    out[1::2] = 0.5 * (s_nodes[:-1] + s_nodes[1:])
    return out


def riccati_coeffs(c) -> RiccatiCoefficients:
    """Coefficients from structure functions ``c[..., k, i, j]`` sampled on a half grid.

    ``c`` is a tuple ``(s_half, C)`` with ``C`` of shape ``(2n+1, ..., 3, 3, 3)``.
    """
    s, C = c
    C = np.asarray(C, dtype=float)
    # zero-based: C^2_31 -> [1, 2, 0], C^3_31 -> [2, 2, 0], C^2_12 -> [1, 0, 1], C^3_12 -> [2, 0, 1]
    return RiccatiCoefficients(
        np.asarray(s, dtype=float),
        -C[..., 1, 2, 0],
        -(C[..., 2, 2, 0] + C[..., 1, 0, 1]),
        -C[..., 2, 0, 1],
    )


@dataclass
class ProjectiveSolution:
    """Unit-normalised lift ``(p, q)`` at the nodes and at step midpoints."""

    s: np.ndarray
    p: np.ndarray
    q: np.ndarray
    p_mid: np.ndarray
    q_mid: np.ndarray
    eps_q: float = EPS_Q

    @property
    def markers(self):
        """True where ``mu`` is undefined (``|q| < eps_q``)."""
        return np.abs(self.q) < self.eps_q

    @property
    def markers_mid(self):
        return np.abs(self.q_mid) < self.eps_q

    @property
    def mu(self):
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(self.markers, np.nan, self.p / self.q)

    @property
    def mu_mid(self):
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(self.markers_mid, np.nan, self.p_mid / self.q_mid)

    def mu_half(self):
        """``mu`` interleaved on the half-step grid."""
        mu, mm = self.mu, self.mu_mid
        out = np.empty((2 * len(mu) - 1,) + mu.shape[1:])
        out[::2] = mu
        out[1::2] = mm
        return out

    def has_blowup(self) -> bool:
        return bool(self.markers.any() or self.markers_mid.any())


@dataclass
class ScalingSolution:
    s: np.ndarray
    alpha: np.ndarray
    alpha0: np.ndarray
    log_ratio: np.ndarray  # ln(|alpha|/|v|) at the nodes


def _lift_rhs(a, b, c, w):
    p, q = w[0], w[1]
    return np.stack([b * p + a * q, -c * p])


def _initial_lift(mu0):
    if isinstance(mu0, tuple):
        p0, q0 = (np.asarray(t, dtype=float) for t in mu0)
    else:
        mu0 = np.asarray(mu0, dtype=float)
        inf = np.isinf(mu0)
        p0 = np.where(inf, np.sign(mu0), mu0)
        q0 = np.where(inf, 0.0, 1.0)
    p0, q0 = np.broadcast_arrays(p0, q0)
    n = np.hypot(p0, q0)
    return np.stack([p0 / n, q0 / n])


def solve_mu(coeffs: RiccatiCoefficients, mu0, eps_q: float = EPS_Q) -> ProjectiveSolution:
    """Integrate the linear lift with RK4 over the coefficient grid.

    ``mu0`` is a finite value, ``+-inf``, or a tuple ``(p0, q0)``.
    """
    s = coeffs.s
    nodes = s[::2]
    n = len(nodes) - 1
    w = _initial_lift(mu0)
    batch = np.broadcast_shapes(w.shape[1:], coeffs.a.shape[1:])
    w = np.broadcast_to(w, (2,) + batch).copy()
    P = np.empty((n + 1,) + batch)
    Q = np.empty_like(P)
    Pm = np.empty((n,) + batch)
    Qm = np.empty_like(Pm)
    P[0], Q[0] = w
    a, b, c = coeffs.a, coeffs.b, coeffs.c
    for k in range(n):
        h = nodes[k + 1] - nodes[k]
        i0, i1, i2 = 2 * k, 2 * k + 1, 2 * k + 2
        k1 = _lift_rhs(a[i0], b[i0], c[i0], w)
        k2 = _lift_rhs(a[i1], b[i1], c[i1], w + 0.5 * h * k1)
        k3 = _lift_rhs(a[i1], b[i1], c[i1], w + 0.5 * h * k2)
        k4 = _lift_rhs(a[i2], b[i2], c[i2], w + h * k3)
        w1 = w + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        d1 = _lift_rhs(a[i2], b[i2], c[i2], w1)
        # cubic Hermite midpoint: (w0 + w1)/2 + h (w0' - w1')/8
        wm = 0.5 * (w + w1) + h * (k1 - d1) / 8.0
        Pm[k], Qm[k] = wm / np.hypot(wm[0], wm[1])
        w = w1 / np.hypot(w1[0], w1[1])
        P[k + 1], Q[k + 1] = w
    return ProjectiveSolution(nodes, P, Q, Pm, Qm, eps_q)


def solve_mu_direct(coeffs: RiccatiCoefficients, mu0):
    """Plain RK4 on the scalar Riccati equation (no lift); diverges at blow-ups."""
    nodes = coeffs.s[::2]
    mu = np.broadcast_to(np.asarray(mu0, dtype=float), coeffs.a.shape[1:]).copy()
    out = [mu.copy()]
    for k in range(len(nodes) - 1):
        h = nodes[k + 1] - nodes[k]
        i0, i1, i2 = 2 * k, 2 * k + 1, 2 * k + 2
        k1 = coeffs.rhs(mu, i0)
        k2 = coeffs.rhs(mu + 0.5 * h * k1, i1)
        k3 = coeffs.rhs(mu + 0.5 * h * k2, i1)
        k4 = coeffs.rhs(mu + h * k3, i2)
        mu = mu + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        out.append(mu.copy())
    return np.array(out)


def _simpson_cumulative(s_half, f_half):
    """Cumulative integral on nodes from values on the half-step grid."""
    nodes = s_half[::2]
    h = np.diff(nodes).reshape((-1,) + (1,) * (f_half.ndim - 1))
    steps = h / 6.0 * (f_half[:-1:2] + 4 * f_half[1::2] + f_half[2::2])
    out = np.zeros((len(nodes),) + f_half.shape[1:])
    out[1:] = np.cumsum(steps, axis=0)
    return out


def solve_alpha(c331, c312, mu: ProjectiveSolution, speed, alpha0) -> ScalingSolution:
    """Integrate ``d/ds ln(alpha/|v|) = C^3_31 + mu C^3_12`` in log space.

    ``c331`` and ``c312`` are sampled on the half-step grid, ``speed`` on the
    nodes. The sign of ``alpha0`` is carried through unchanged.
    """
    if mu.has_blowup():
        raise SpanSplitError(
            "mu blows up inside the requested span; restrict the tube (shorter L or smaller disc)"
        )
    alpha0 = np.asarray(alpha0, dtype=float)
    if np.any(alpha0 == 0):
        raise ValueError("alpha0 must be nonzero")
    s_half = half_grid(mu.s)
    f = np.asarray(c331, float) + mu.mu_half() * np.asarray(c312, float)
    speed = np.asarray(speed, dtype=float)
    g = np.log(np.abs(alpha0) / speed[0]) + _simpson_cumulative(s_half, f)
    alpha = np.sign(alpha0) * speed * np.exp(g)
    return ScalingSolution(mu.s, alpha, alpha0, g)


def derivative(y, h: float):
    """Fourth-order finite-difference derivative along axis 0 of uniformly sampled ``y``."""
    y = np.asarray(y, dtype=float)
    n = len(y)
    if n < 5:
        return np.gradient(y, h, axis=0)
    d = np.empty_like(y)
    d[2:-2] = (y[:-4] - 8 * y[1:-3] + 8 * y[3:-1] - y[4:]) / (12 * h)
    d[0] = (-25 * y[0] + 48 * y[1] - 36 * y[2] + 16 * y[3] - 3 * y[4]) / (12 * h)
    d[1] = (-3 * y[0] - 10 * y[1] + 18 * y[2] - 6 * y[3] + y[4]) / (12 * h)
    d[-1] = (25 * y[-1] - 48 * y[-2] + 36 * y[-3] - 16 * y[-4] + 3 * y[-5]) / (12 * h)
    d[-2] = (3 * y[-1] + 10 * y[-2] - 18 * y[-3] + 6 * y[-4] - y[-5]) / (12 * h)
    return d


def compatibility_residual(mu1, mu2, alpha1, alpha2, c312, s):
    """Pointwise ``d/ds ln(alpha1/alpha2) - C^3_12 (mu1 - mu2)`` on the nodes."""
    s = np.asarray(s, dtype=float)
    h = s[1] - s[0]
    lr = np.log(np.abs(np.asarray(alpha1) / np.asarray(alpha2)))
    return derivative(lr, h) - np.asarray(c312) * (np.asarray(mu1) - np.asarray(mu2))


@dataclass
class Lemma3Result:
    max_residual: float
    mu: np.ndarray
    markers: np.ndarray


def lemma3_check(mu1: ProjectiveSolution, mu2: ProjectiveSolution, K: float,
                 coeffs: RiccatiCoefficients, blowup_tol: float = 1e-6) -> Lemma3Result:
    """Build the one-parameter family from two solutions and re-substitute.

    ``mu - mu1 = K (mu - mu2) E(s)`` with ``E = exp(int C^3_12 (mu2 - mu1) ds)``
    and ``C^3_12 = -coeffs.c``. The family member is ``mu = p / q`` with
    ``p = mu1 - K E mu2`` and ``q = 1 - K E``; the equation is re-substituted
    in the pole-free form ``(p'q - pq' - (A q^2 + B p q + C p^2)) / (p^2 + q^2)``,
    which equals ``(mu' - A - B mu - C mu^2) / (1 + mu^2)`` wherever mu is finite.
    """
    if mu1.has_blowup() or mu2.has_blowup():
        raise SpanSplitError("the general-solution check needs blow-up free base solutions")
    m1, m2 = mu1.mu, mu2.mu
    if np.any(m1 == m2):
        raise ValueError("the two base solutions must differ on the span")
    c312_half = -coeffs.c
    E = np.exp(_simpson_cumulative(coeffs.s, c312_half * (mu2.mu_half() - mu1.mu_half())))
    p = m1 - K * E * m2
    q = 1.0 - K * E
    markers = np.abs(q) < blowup_tol * np.hypot(p, q)
    with np.errstate(divide="ignore", invalid="ignore"):
        mu = np.where(markers, np.nan, p / q)
    h = mu1.s[1] - mu1.s[0]
    a, b, c = coeffs.a[::2], coeffs.b[::2], coeffs.c[::2]
    lhs = derivative(p, h) * q - p * derivative(q, h)
    res = np.abs(lhs - (a * q * q + b * p * q + c * p * p)) / (p * p + q * q)
    return Lemma3Result(float(np.max(res)), mu, markers)


def streamline_coefficients(frame: AdaptedFrame, positions_half, s_half, cfg: DiffConfig = DEFAULT_CFG):
    """Coefficient data along streamline(s) sampled on the half-step grid.

    Returns ``(coeffs, c331, c312)``; ``c331``/``c312`` stay on the half grid.
    """
    c231, c331, c212, c312 = transport_coefficients(frame, positions_half, cfg)
    coeffs = RiccatiCoefficients(np.asarray(s_half, dtype=float), -c231, -(c331 + c212), -c312)
    return coeffs, c331, c312
