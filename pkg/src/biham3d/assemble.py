"""Poisson pair, conformal factor and Hamiltonians on a stream tube.

Sign convention. With ``e1 . (e2 x e3) = +1`` one has
``J1 x J2 = alpha1 alpha2 (mu2 - mu1) e1``. For ``v = J1 x grad H2 = J2 x grad H1``,
``J_i = (-1)^(i+1) phi grad H_i`` and ``i_v Omega = phi dH1 ^ dH2`` to hold
together, the conformal factor must be

    phi = alpha1 alpha2 (mu1 - mu2) / |v|           ("artifact" convention).

The opposite sign (``"flipped"``) is kept selectable as a regression guard; with
it the Hamiltonian identities fail by O(1).

Two routes to the pair are provided:

* :func:`solve_tube` / :func:`assemble_pair`: the Riccati and scaling
  equations solved on the tube's own streamline samples;
* :class:`PoissonPair`: the same fields evaluated at *arbitrary* points by
  pulling each point back to the seed disc along the flow and integrating the
  equations forward. Residuals that need derivatives use this route, so
  ordinary finite-difference stencils apply.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .calc3 import DEFAULT_CFG, DiffConfig, curl, div, grad
from .errors import DegeneratePairError, SpanSplitError
from .flowline import StreamTube, locate_on_disc, unit_flow_strict
from .framekit import AdaptedFrame, transport_coefficients
from .riccati import EPS_Q, half_grid, solve_alpha, solve_mu, streamline_coefficients

__all__ = [
    "PairConfig",
    "PoissonPair",
    "TubeSolution",
    "PoissonField",
    "solve_tube",
    "assemble_pair",
    "phi",
    "reconstruct_hamiltonians",
    "jacobi_residual",
    "compatibility_residual_vec",
    "bihamiltonian_residual",
    "lemma1_residual",
    "two_form_check",
    "gradient_form_residual",
]

EPS_SEP = 1e-6


@dataclass(frozen=True)
class PairConfig:
    """Initial data and options for building the pair.

    ``seed_policy`` decides how the free initial data vary over the seed disc:

    * ``"hamiltonian"``: initial data read off from linear seed Hamiltonians
      on the disc, which makes the transverse extension consistent, so every
      identity holds off-axis as well;
    * ``"constant"``: the base values are copied to every seed.

    Both agree at the base point.
    """

    mu0: tuple = (0.0, 1.0)
    alpha0: Optional[tuple] = None  # None -> (|v(base)|, |v(base)|)
    seed_policy: str = "hamiltonian"
    convention: str = "artifact"
    eps_q: float = EPS_Q
    eps_sep: float = EPS_SEP
    quad_nodes: int = 24
    quad_rule: str = "gauss"

    def __post_init__(self):
        if self.seed_policy not in ("hamiltonian", "constant"):
            raise ValueError(f"unknown seed policy {self.seed_policy!r}")
        if self.convention not in ("artifact", "flipped"):
            raise ValueError(f"unknown sign convention {self.convention!r}")
        if self.quad_rule not in ("gauss", "trapezoid"):
            raise ValueError(f"unknown quadrature rule {self.quad_rule!r}")


def phi(alpha1, alpha2, mu1, mu2, speed, convention: str = "artifact", eps_sep: float = EPS_SEP):
    """Conformal factor; raises where the pair degenerates (``mu1 == mu2``)."""
    mu1, mu2 = np.asarray(mu1, float), np.asarray(mu2, float)
    if np.any(np.abs(mu1 - mu2) < eps_sep):
        raise DegeneratePairError("mu1 and mu2 coincide; the Hamiltonians would be dependent")
    sign = 1.0 if convention == "artifact" else -1.0
    return sign * np.asarray(alpha1) * np.asarray(alpha2) * (mu1 - mu2) / np.asarray(speed)


def _lift_rhs(a, b, c, p, q):
    return b * p + a * q, -c * p


class PoissonPair:
    """Pointwise evaluator of ``(mu_i, alpha_i, J_i, phi, H_i)`` near a tube.

    A query point ``x`` is mapped to its foot point ``y`` on the seed disc plane
    and arclength ``s`` (``x = flow_s(y)``); the seed data at ``y`` are then
    carried to ``x`` by the Riccati lift and the scaling equation, integrated
    jointly with the streamline by RK4.
    """

    cache_size = 8

    def __init__(self, v, frame: AdaptedFrame, base, ds: float, config: PairConfig = PairConfig(),
                 cfg: DiffConfig = DEFAULT_CFG):
        self.v = v
        self.frame = frame
        self.base = np.asarray(base, dtype=float)
        self.ds = float(ds)
        self.config = config
        self.cfg = cfg
        self.E_base = frame.axes(self.base)
        self.normal = self.E_base[0]
        speed_b = float(np.linalg.norm(v(self.base)))
        mu0 = np.asarray(config.mu0, dtype=float)
        alpha0 = np.asarray(config.alpha0 if config.alpha0 is not None else (speed_b, speed_b), dtype=float)
        if abs(mu0[0] - mu0[1]) < config.eps_sep:
            raise DegeneratePairError("initial mu1 and mu2 coincide")
        self.mu0, self.alpha0 = mu0, alpha0
        e2, e3 = self.E_base[1], self.E_base[2]
        J1b = alpha0[0] * (e2 + mu0[0] * e3)
        J2b = alpha0[1] * (e2 + mu0[1] * e3)
        phib = phi(alpha0[0], alpha0[1], mu0[0], mu0[1], speed_b)
        # in-plane gradients of the linear seed Hamiltonians (artifact convention)
        self.seed_grad = np.array([J1b / phib, -J2b / phib])
        self._cache = OrderedDict()

    @property
    def contains(self):
        return getattr(self.v, "contains", None)

    # ----- seed data on the disc plane

    def seed_data(self, y):
        """``(mu, alpha)`` arrays of shape ``(2, ...)`` at disc points ``y``."""
        y = np.asarray(y, dtype=float)
        shape = y.shape[:-1]
        if self.config.seed_policy == "constant":
            mu = np.broadcast_to(self.mu0.reshape((2,) + (1,) * len(shape)), (2,) + shape).copy()
            al = np.broadcast_to(self.alpha0.reshape((2,) + (1,) * len(shape)), (2,) + shape).copy()
            return mu, al
        vy = np.asarray(self.v(y), dtype=float)
        speed = np.linalg.norm(vy, axis=-1)
        E = self.frame.axes(y)
        n = self.normal
        G = []
        for g in self.seed_grad:
            # lift the in-plane gradient to a 3D gradient orthogonal to v
            t = -(vy @ g) / (vy @ n)
            G.append(g + t[..., None] * n)
        cross = np.cross(G[0], G[1])
        ph = speed / np.einsum("...i,...i->...", E[..., 0, :], cross)
        J = [ph[..., None] * G[0], -ph[..., None] * G[1]]
        mu, al = [], []
        for Ji in J:
            a = np.einsum("...i,...i->...", Ji, E[..., 1, :])
            b = np.einsum("...i,...i->...", Ji, E[..., 2, :])
            mu.append(b / a)
            al.append(a)
        return np.array(mu), np.array(al)

    def seed_fields(self, y):
        """``(J1, J2, phi)`` on the disc plane under the configured convention."""
        mu, al = self.seed_data(y)
        E = self.frame.axes(y)
        speed = np.linalg.norm(self.v(y), axis=-1)
        J = [al[i][..., None] * (E[..., 1, :] + mu[i][..., None] * E[..., 2, :]) for i in range(2)]
        ph = phi(al[0], al[1], mu[0], mu[1], speed, self.config.convention, self.config.eps_sep)
        return J[0], J[1], ph

    # ----- transport

    def _derivs(self, X, P, Q, want_alpha=True):
        e1, c231, c331, c212, c312 = transport_coefficients(self.frame, X, self.cfg, with_e1=True)
        a, b, c = -c231, -(c331 + c212), -c312
        dP, dQ = _lift_rhs(a, b, c, P, Q)
        if np.any(np.abs(Q) < self.config.eps_q * np.hypot(P, Q)):
            raise SpanSplitError("mu blows up between the seed disc and a query point; restrict the tube")
        dG = c331 + (P / Q) * c312
        return e1, dP, dQ, dG

    def evaluate(self, x):
        """All pair quantities at ``x``; returns a dict of arrays."""
        x = np.asarray(x, dtype=float)
        key = (x.shape, x.tobytes())
        if key in self._cache:
            self._cache.move_to_end(key)
            return self._cache[key]
        shape = x.shape[:-1]
        X0 = x.reshape(-1, 3)
        y, S, N = locate_on_disc(self.v, self.base, self.normal, X0, self.ds, eps_v=self.frame.eps_v)
        mu0, al0 = self.seed_data(y)
        speed_y = np.linalg.norm(self.v(y), axis=-1)
        n = np.hypot(mu0, 1.0)
        P, Q = mu0 / n, 1.0 / n
        G = np.log(np.abs(al0) / speed_y)
        X = y.copy()
        h = S / N
        hv = h[:, None]
        for _ in range(N):
            k1 = self._derivs(X, P, Q)
            k2 = self._derivs(X + 0.5 * hv * k1[0], P + 0.5 * h * k1[1], Q + 0.5 * h * k1[2])
            k3 = self._derivs(X + 0.5 * hv * k2[0], P + 0.5 * h * k2[1], Q + 0.5 * h * k2[2])
            k4 = self._derivs(X + hv * k3[0], P + h * k3[1], Q + h * k3[2])
            X = X + hv / 6.0 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
            P = P + h / 6.0 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
            Q = Q + h / 6.0 * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])
            G = G + h / 6.0 * (k1[3] + 2 * k2[3] + 2 * k3[3] + k4[3])
            nrm = np.hypot(P, Q)
            P, Q = P / nrm, Q / nrm
        if np.any(np.abs(Q) < self.config.eps_q):
            raise SpanSplitError("mu is undefined at a query point")
        mu = P / Q
        speed = np.linalg.norm(self.v(X0), axis=-1)
        alpha = np.sign(al0) * speed * np.exp(G)
        E = self.frame.axes(X0)
        J = [alpha[i][:, None] * (E[:, 1, :] + mu[i][:, None] * E[:, 2, :]) for i in range(2)]
        out = {
            "y": y.reshape(shape + (3,)),
            "s": S.reshape(shape),
            "mu": mu.reshape((2,) + shape),
            "alpha": alpha.reshape((2,) + shape),
            "J1": J[0].reshape(shape + (3,)),
            "J2": J[1].reshape(shape + (3,)),
            "speed": speed.reshape(shape),
            "end_mismatch": np.linalg.norm(X - X0, axis=-1).reshape(shape),
        }
        self._cache[key] = out
        if len(self._cache) > self.cache_size:
            self._cache.popitem(last=False)
        return out

    # ----- callables

    def _wrap(self, fn):
        fn.contains = self.contains
        return fn

    def J(self, i: int) -> Callable:
        return self._wrap(lambda x: self.evaluate(x)[f"J{i}"])

    def mu(self, i: int) -> Callable:
        return self._wrap(lambda x: self.evaluate(x)["mu"][i - 1])

    def alpha(self, i: int) -> Callable:
        return self._wrap(lambda x: self.evaluate(x)["alpha"][i - 1])

    def speed(self) -> Callable:
        return self._wrap(lambda x: np.linalg.norm(self.v(x), axis=-1))

    def arclength(self) -> Callable:
        return self._wrap(lambda x: self.evaluate(x)["s"])

    def phi_field(self) -> Callable:
        def fn(x):
            ev = self.evaluate(x)
            m, a = ev["mu"], ev["alpha"]
            return phi(a[0], a[1], m[0], m[1], ev["speed"], self.config.convention, self.config.eps_sep)

        return self._wrap(fn)

    def seed_coordinates(self, y):
        d = np.asarray(y, dtype=float) - self.base
        return d @ self.E_base[1], d @ self.E_base[2]

    def H(self, i: int, path: str = "radial") -> Callable:
        """Hamiltonian ``H_i``, zero at the base point, flow invariant by construction.

        ``H_i(x)`` is the line integral of ``(-1)^(i+1) J_i / phi`` over the seed
        disc from the base point to the foot point of ``x``. ``path`` is
        ``"radial"`` (straight segment) or ``"axis"`` (along e2, then e3).
        """

        def fn(x):
            x = np.asarray(x, dtype=float)
            y, _, _ = locate_on_disc(self.v, self.base, self.normal, x.reshape(-1, 3), self.ds,
                                     eps_v=self.frame.eps_v)
            return self.disc_integral(i, y, path).reshape(x.shape[:-1])

        return self._wrap(fn)

    def _quad(self):
        n = self.config.quad_nodes
        if self.config.quad_rule == "gauss":
            t, w = np.polynomial.legendre.leggauss(n)
            return 0.5 * (t + 1.0), 0.5 * w
        t = np.linspace(0.0, 1.0, n)
        w = np.full(n, 1.0 / (n - 1))
        w[[0, -1]] *= 0.5
        return t, w

    def disc_integral(self, i: int, y, path: str = "radial"):
        y = np.asarray(y, dtype=float)
        sign = 1.0 if i == 1 else -1.0
        t, w = self._quad()
        if path == "radial":
            legs = [(self.base, y)]
        elif path == "axis":
            d = y - self.base
            corner = self.base + (d @ self.E_base[1])[..., None] * self.E_base[1]
            legs = [(np.broadcast_to(self.base, y.shape), corner), (corner, y)]
        else:
            raise ValueError(f"unknown path {path!r}")
        total = np.zeros(y.shape[:-1])
        for start, end in legs:
            start = np.broadcast_to(start, y.shape)
            d = end - start
            pts = start[None] + t.reshape((-1,) + (1,) * d.ndim) * d[None]
            J1, J2, ph = self.seed_fields(pts)
            Ji = J1 if i == 1 else J2
            integrand = np.einsum("q...i,...i->q...", sign * Ji / ph[..., None], d)
            total += np.tensordot(w, integrand, axes=(0, 0))
        return total


# --------------------------------------------------------------------------
# sampled route


@dataclass
class TubeSolution:
    """``mu``/``alpha`` on every tube sample, shape ``(2, n_r, n_theta, n_s)``."""

    tube: StreamTube
    mu: np.ndarray
    alpha: np.ndarray
    speed: np.ndarray
    c312: np.ndarray  # on the nodes
    blowup: np.ndarray


def solve_tube(tube: StreamTube, pair: PoissonPair, cfg: Optional[DiffConfig] = None) -> TubeSolution:
    """Solve the Riccati and scaling equations on each streamline of ``tube``."""
    if not tube.complete:
        raise SpanSplitError(f"tube has truncated streamlines: {tube.truncated_seeds()}")
    cfg = cfg or pair.cfg
    nr, nt, ns = tube.x.shape[:3]
    xs = tube.x.reshape(nr * nt, ns, 3)
    ts = tube.tangent.reshape(nr * nt, ns, 3)
    h = np.diff(tube.s)[None, :, None]
    mids = 0.5 * (xs[:, :-1] + xs[:, 1:]) + h * (ts[:, :-1] - ts[:, 1:]) / 8.0
    pos = np.empty((nr * nt, 2 * ns - 1, 3))
    pos[:, ::2] = xs
    pos[:, 1::2] = mids
    s_half = half_grid(tube.s)
    coeffs, c331, c312 = streamline_coefficients(pair.frame, np.moveaxis(pos, 1, 0), s_half, cfg)
    mu0, al0 = pair.seed_data(xs[:, 0])
    speed = np.linalg.norm(pair.v(xs), axis=-1).T  # (ns, m)
    mus, als, blow = [], [], []
    for i in range(2):
        sol = solve_mu(coeffs, mu0[i], pair.config.eps_q)
        blow.append(sol.markers)
        mus.append(sol.mu)
        als.append(solve_alpha(c331, c312, sol, speed, al0[i]).alpha)
    shape = (nr, nt, ns)
    fix = lambda a: np.moveaxis(a, 0, -1).reshape(shape)
    return TubeSolution(
        tube,
        np.array([fix(m) for m in mus]),
        np.array([fix(a) for a in als]),
        fix(speed),
        fix(c312[::2]),
        np.array([fix(b) for b in blow]),
    )


@dataclass
class PoissonField:
    alpha: np.ndarray
    mu: np.ndarray
    J: np.ndarray

    @property
    def beta(self):
        """Coefficient of e3 (``alpha * mu``)."""
        return self.alpha * self.mu


def assemble_pair(tube: StreamTube, mu1, mu2, alpha1, alpha2, eps_sep: float = EPS_SEP):
    """Sampled ``J_i = alpha_i (e2 + mu_i e3)`` and the independence certificate.

    Returns ``(J1, J2, certificate)`` where the certificate is
    ``min |J1 x J2| / (|J1| |J2|)`` over the samples.
    """
    mu1, mu2 = np.asarray(mu1), np.asarray(mu2)
    if np.any(~np.isfinite(mu1)) or np.any(~np.isfinite(mu2)):
        raise SpanSplitError("blow-up markers inside the span; restrict the tube")
    if np.any(np.abs(mu1 - mu2) < eps_sep):
        raise DegeneratePairError("|mu1 - mu2| < eps_sep somewhere on the tube")
    E = tube.frame.axes(tube.x)
    J1 = PoissonField(alpha1, mu1, alpha1[..., None] * (E[..., 1, :] + mu1[..., None] * E[..., 2, :]))
    J2 = PoissonField(alpha2, mu2, alpha2[..., None] * (E[..., 1, :] + mu2[..., None] * E[..., 2, :]))
    cross = np.linalg.norm(np.cross(J1.J, J2.J), axis=-1)
    cert = float(np.min(cross / (np.linalg.norm(J1.J, axis=-1) * np.linalg.norm(J2.J, axis=-1))))
    if not cert > 0:
        raise DegeneratePairError("J1 and J2 are parallel somewhere on the tube")
    return J1, J2, cert


def reconstruct_hamiltonians(pair: PoissonPair, tube: StreamTube, path: str = "radial",
                             check_cfg: DiffConfig = DiffConfig(h=1e-4), stride: int = 0):
    """Hamiltonians on the tube samples plus the closedness diagnostic.

    Returns ``(H1, H2, report)``; ``H_i`` have shape ``(n_r, n_theta, n_s)``
    (constant along each streamline). ``report`` carries the maximal curl of
    the target gradient fields ``(-1)^(i+1) J_i / phi`` on the seed disc,
    relative to their size, and its location.
    """
    seeds = tube.seeds
    H = [pair.disc_integral(i, seeds, path) for i in (1, 2)]
    ns = len(tube.s)
    H = [np.repeat(h[..., None], ns, axis=-1) for h in H]
    report = {}
    for i in (1, 2):
        sign = 1.0 if i == 1 else -1.0

        def target(x, i=i, sign=sign):
            ev = pair.evaluate(x)
            m, a = ev["mu"], ev["alpha"]
            ph = phi(a[0], a[1], m[0], m[1], ev["speed"], pair.config.convention)
            return sign * ev[f"J{i}"] / ph[..., None]

        target.contains = pair.contains
        pts = seeds.reshape(-1, 3)
        c = np.linalg.norm(curl(target, pts, check_cfg), axis=-1)
        size = np.linalg.norm(target(pts), axis=-1)
        rel = c / size
        k = int(np.argmax(rel))
        report[f"H{i}"] = {"max_curl": float(rel[k]), "location": pts[k].tolist()}
    return H[0], H[1], report


# --------------------------------------------------------------------------
# residual identities (pointwise, callables in)


def jacobi_residual(J: Callable, x, cfg: DiffConfig = DEFAULT_CFG, normalized: bool = False, eps: float = 1e-300):
    """``J . curl J``; optionally divided by ``|J| |curl J| + eps``."""
    Jx = np.asarray(J(x))
    cJ = curl(J, x, cfg)
    r = np.einsum("...i,...i->...", Jx, cJ)
    if normalized:
        return r / (np.linalg.norm(Jx, axis=-1) * np.linalg.norm(cJ, axis=-1) + eps)
    return r


def compatibility_residual_vec(J1: Callable, J2: Callable, x, cfg: DiffConfig = DEFAULT_CFG):
    """``curl J2 . J1 + curl J1 . J2``."""
    return np.einsum("...i,...i->...", curl(J2, x, cfg), J1(x)) + np.einsum(
        "...i,...i->...", curl(J1, x, cfg), J2(x)
    )


def bihamiltonian_residual(v, J1: Callable, J2: Callable, H1: Callable, H2: Callable, x,
                           cfg: DiffConfig = DEFAULT_CFG):
    """Relative residuals of ``v = J1 x grad H2`` and ``v = J2 x grad H1``."""
    vx = np.asarray(v(x))
    nv = np.linalg.norm(vx, axis=-1)
    r1 = np.linalg.norm(vx - np.cross(J1(x), grad(H2, x, cfg)), axis=-1) / nv
    r2 = np.linalg.norm(vx - np.cross(J2(x), grad(H1, x, cfg)), axis=-1) / nv
    return r1, r2


def gradient_form_residual(J1: Callable, J2: Callable, phi_fn: Callable, H1: Callable, H2: Callable, x,
                           cfg: DiffConfig = DEFAULT_CFG):
    """Relative residuals of ``J_i = (-1)^(i+1) phi grad H_i``."""
    ph = np.asarray(phi_fn(x))[..., None]
    out = []
    for sign, J, H in ((1.0, J1, H1), (-1.0, J2, H2)):
        Jx = np.asarray(J(x))
        out.append(np.linalg.norm(Jx - sign * ph * grad(H, x, cfg), axis=-1) / np.linalg.norm(Jx, axis=-1))
    return tuple(out)


def lemma1_residual(frame: AdaptedFrame, alpha1: Callable, alpha2: Callable, mu1: Callable, mu2: Callable,
                    speed: Callable, x, cfg: DiffConfig = DEFAULT_CFG):
    """``div e1 - e1 . grad ln(|alpha1 alpha2 (mu2 - mu1)| / |v|^2)``."""

    def log_arg(p):
        return np.log(np.abs(alpha1(p) * alpha2(p) * (mu2(p) - mu1(p))) / speed(p) ** 2)

    log_arg.contains = frame.contains
    e1 = frame.unit(0)
    return div(e1, x, cfg) - np.einsum("...i,...i->...", frame.e1(x), grad(log_arg, x, cfg))


def two_form_check(v, phi_fn: Callable, H1: Callable, H2: Callable, x, cfg: DiffConfig = DEFAULT_CFG):
    """Norm of ``i_v Omega - phi dH1 ^ dH2`` (absolute, Euclidean 2-form norm)."""
    w = np.asarray(v(x))  # components of i_v Omega in the (dy^dz, dz^dx, dx^dy) basis
    dd = np.cross(grad(H1, x, cfg), grad(H2, x, cfg))
    return np.linalg.norm(w - np.asarray(phi_fn(x))[..., None] * dd, axis=-1)
