"""Arclength streamlines, stream tubes and tube coordinates.

Streamlines solve ``dx/ds = v/|v|`` with the classic fixed-step RK4 scheme so
that every streamline of a tube shares the same arclength grid.
"""

from __future__ import annotations

import csv
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import DomainError, TubeConstructionError, VanishingFieldError
from .framekit import EPS_V, AdaptedFrame

__all__ = [
    "Streamline",
    "StreamTube",
    "integrate_streamline",
    "build_tube",
    "transverse_derivative",
    "locate_on_disc",
    "write_tube_csv",
]


def _unit_flow(v, x, eps_v=EPS_V):
    """``v/|v|`` plus a mask of points where it is defined."""
    vx = np.asarray(v(x), dtype=float)
    speed = np.linalg.norm(vx, axis=-1)
    ok = np.isfinite(speed) & (speed >= eps_v)
    contains = getattr(v, "contains", None)
    if contains is not None:
        ok &= np.asarray(contains(x), dtype=bool)
    safe = np.where(ok, speed, 1.0)
    return vx / safe[..., None], ok


def unit_flow_strict(v, x, eps_v=EPS_V):
    """``v/|v|``; raises instead of masking."""
    contains = getattr(v, "contains", None)
    if contains is not None and not np.all(contains(x)):
        raise DomainError("streamline evaluation left the field domain")
    vx = np.asarray(v(x), dtype=float)
    speed = np.linalg.norm(vx, axis=-1, keepdims=True)
    if np.any(speed < eps_v):
        raise VanishingFieldError("vector field vanishes along a streamline")
    return vx / speed


def _rk4_step(f, x, h):
    """One RK4 step for autonomous ``f``; ``h`` broadcasts against ``x[..., 0]``."""
    h = np.asarray(h, dtype=float)[..., None]
    k1 = f(x)
    k2 = f(x + 0.5 * h * k1)
    k3 = f(x + 0.5 * h * k2)
    k4 = f(x + h * k3)
    return x + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


@dataclass
class Streamline:
    """Arclength-sampled integral curve of ``v``.

    ``tangent`` holds ``e1`` at the samples and doubles as the Hermite
    derivative data for :meth:`interpolate`.
    """

    base: np.ndarray
    ds: float
    s: np.ndarray
    x: np.ndarray
    tangent: np.ndarray
    truncation: Optional[str] = None

    @property
    def truncated(self) -> bool:
        return self.truncation is not None

    @property
    def length(self) -> float:
        return float(self.s[-1])

    def interpolate(self, s_query):
        s_query = np.asarray(s_query, dtype=float)
        sgn = 1.0 if self.ds > 0 else -1.0
        k = np.clip(np.searchsorted(sgn * self.s, sgn * s_query, side="right") - 1, 0, len(self.s) - 2)
        h = (self.s[k + 1] - self.s[k])
        t = (s_query - self.s[k]) / h
        h = h[..., None] if np.ndim(h) else h
        return _hermite(self.x[k], self.x[k + 1], self.tangent[k], self.tangent[k + 1], h, t)

    def midpoints(self):
        """Positions halfway between consecutive samples."""
        h = np.diff(self.s)[:, None]
        return _hermite(self.x[:-1], self.x[1:], self.tangent[:-1], self.tangent[1:], h, 0.5)


def _hermite(x0, x1, m0, m1, h, t):
    t = np.asarray(t, dtype=float)[..., None] if np.ndim(t) else t
    t2, t3 = t * t, t * t * t
    return (
        (2 * t3 - 3 * t2 + 1) * x0
        + (t3 - 2 * t2 + t) * h * m0
        + (-2 * t3 + 3 * t2) * x1
        + (t3 - t2) * h * m1
    )


def _integrate_many(v, X0, n_steps, ds, eps_v=EPS_V):
    """RK4 for many seeds at once.

    Returns positions ``(n_steps + 1, m, 3)``, tangents, the number of valid
    samples per seed and a reason string per truncated seed.
    """
    X0 = np.asarray(X0, dtype=float).reshape(-1, 3)
    m = len(X0)
    xs = np.full((n_steps + 1, m, 3), np.nan)
    ts = np.full((n_steps + 1, m, 3), np.nan)
    xs[0] = X0
    t0, ok0 = _unit_flow(v, X0, eps_v)
    ts[0] = t0
    n_valid = np.where(ok0, n_steps + 1, 0)
    reasons: list[Optional[str]] = [None if ok else "seed fails |v| >= eps_v or lies outside domain" for ok in ok0]
    active = ok0.copy()
    x = X0.copy()
    for step in range(n_steps):
        if not active.any():
            break
        idx = np.nonzero(active)[0]
        xa = x[idx]
        good = np.ones(len(idx), dtype=bool)
        stages = []
        probe = xa
        for c in (0.0, 0.5, 0.5, 1.0):
            if stages:
                probe = xa + c * ds * stages[-1]
            k, ok = _unit_flow(v, probe, eps_v)
            good &= ok
            stages.append(k)
        new = xa + ds / 6.0 * (stages[0] + 2 * stages[1] + 2 * stages[2] + stages[3])
        tan, ok = _unit_flow(v, new, eps_v)
        good &= ok & np.all(np.isfinite(new), axis=-1)
        for j in idx[~good]:
            n_valid[j] = step + 1
            reasons[j] = _reason(v, x[j], eps_v, step * ds)
            active[j] = False
        gi = idx[good]
        x[gi] = new[good]
        xs[step + 1, gi] = new[good]
        ts[step + 1, gi] = tan[good]
    return xs, ts, n_valid, reasons


def _reason(v, x, eps_v, s):
    contains = getattr(v, "contains", None)
    if contains is not None:
        if not np.all(contains(x[None, :])):
            return f"left field domain near s={s:.6g}"
    return f"field vanishes or leaves domain near s={s:.6g}"


def integrate_streamline(v, x0, L: float, ds: float, eps_v: float = EPS_V) -> Streamline:
    """Arclength streamline from ``x0``; negative ``L`` integrates upstream."""
    x0 = np.asarray(x0, dtype=float)
    _, ok = _unit_flow(v, x0[None, :], eps_v)
    if not ok[0]:
        raise VanishingFieldError(f"|v(x0)| < eps_v or x0 outside domain at {x0.tolist()}")
    n = int(np.floor(abs(L) / ds + 1e-9))
    step = np.sign(L) * ds if L != 0 else ds
    xs, ts, n_valid, reasons = _integrate_many(v, x0[None, :], n, step, eps_v)
    nv = int(n_valid[0])
    s = np.arange(nv) * step
    x, t = xs[:nv, 0], ts[:nv, 0]
    rest = L - n * step
    if reasons[0] is None and abs(rest) > 1e-12 * max(1.0, abs(L)):
        # final short step so the last sample sits exactly at L
        xe, te, nve, why = _integrate_many(v, x[-1:], 1, rest, eps_v)
        if why[0] is None:
            s = np.append(s, L)
            x = np.vstack([x, xe[1]])
            t = np.vstack([t, te[1]])
        else:
            reasons = [why[0]]
    return Streamline(x0, float(step), s, x, t, reasons[0])


@dataclass
class StreamTube:
    """Streamlines seeded on a polar grid in the (e2, e3)-plane at ``base``.

    Ring ``i = 0`` collapses onto the base point, so seed ``(0, 0)`` is the
    base streamline. ``x[i, j, k]`` is the position of seed ``(i, j)`` at
    arclength ``s[k]``; samples past a truncation are NaN.
    """

    base: np.ndarray
    frame: AdaptedFrame
    r_d: float
    n_r: int
    n_theta: int
    L: float
    ds: float
    seeds: np.ndarray
    seed_coords: np.ndarray
    s: np.ndarray
    x: np.ndarray
    tangent: np.ndarray
    n_valid: np.ndarray
    truncation: list = field(default_factory=list)

    @property
    def disc_axes(self):
        """Rows e1, e2, e3 of the frame at the base point."""
        return self.frame.axes(self.base)

    @property
    def complete(self) -> bool:
        return bool(np.all(self.n_valid == len(self.s)))

    def truncated_seeds(self):
        return [(i, j) for i in range(self.n_r) for j in range(self.n_theta) if self.n_valid[i, j] < len(self.s)]

    def streamline(self, i: int, j: int) -> Streamline:
        nv = int(self.n_valid[i, j])
        return Streamline(
            self.seeds[i, j], self.ds, self.s[:nv], self.x[i, j, :nv], self.tangent[i, j, :nv],
            self.truncation[i][j],
        )

    def samples(self):
        """Flattened ``(seed_i, seed_j, s, x)`` rows of every valid sample."""
        rows = []
        for i in range(self.n_r):
            for j in range(self.n_theta):
                for k in range(int(self.n_valid[i, j])):
                    rows.append((i, j, self.s[k], *self.x[i, j, k]))
        return rows


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("BIHAM3D_THREADS", "1")))
    except ValueError:
        return 1


def build_tube(v, frame: AdaptedFrame, base, r_d: float, n_r: int, n_theta: int, L: float,
               ds: float, eps_v: float = EPS_V) -> StreamTube:
    base = np.asarray(base, dtype=float)
    if n_r < 1 or n_theta < 1:
        raise ValueError("need n_r >= 1 and n_theta >= 1")
    E = frame.axes(base)
    radii = r_d * np.arange(n_r) / max(n_r - 1, 1)
    theta = 2 * np.pi * np.arange(n_theta) / n_theta
    coords = np.stack(np.broadcast_arrays(radii[:, None] * np.cos(theta), radii[:, None] * np.sin(theta)), axis=-1)
    seeds = base + coords[..., 0:1] * E[1] + coords[..., 1:2] * E[2]

    _, ok = _unit_flow(v, seeds.reshape(-1, 3), eps_v)
    if not ok.all():
        bad = [divmod(int(q), n_theta) for q in np.nonzero(~ok)[0]]
        raise TubeConstructionError(
            f"{len(bad)} seed(s) violate |v| >= eps_v or lie outside the field domain: {bad}",
            failing_seeds=bad,
        )
    # negative L integrates upstream; s then runs from 0 down to L
    n = int(round(abs(L) / ds))
    step = ds if L >= 0 else -ds
    flat = seeds.reshape(-1, 3)
    workers = _threads()
    if workers > 1 and len(flat) > 1:
        chunks = np.array_split(np.arange(len(flat)), workers)
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(lambda c: _integrate_many(v, flat[c], n, step, eps_v), chunks))
        xs = np.concatenate([p[0] for p in parts], axis=1)
        ts = np.concatenate([p[1] for p in parts], axis=1)
        n_valid = np.concatenate([p[2] for p in parts])
        reasons = [r for p in parts for r in p[3]]
    else:
        xs, ts, n_valid, reasons = _integrate_many(v, flat, n, step, eps_v)
    shape = (n_r, n_theta)
    x = np.moveaxis(xs, 0, 1).reshape(shape + (n + 1, 3))
    t = np.moveaxis(ts, 0, 1).reshape(shape + (n + 1, 3))
    trunc = [[reasons[i * n_theta + j] for j in range(n_theta)] for i in range(n_r)]
    return StreamTube(
        base, frame, r_d, n_r, n_theta, n * step, ds, seeds, coords,
        np.arange(n + 1) * step, x, t, n_valid.reshape(shape), trunc,
    )


def _neighbors(tube: StreamTube, i: int, j: int):
    nb = []
    one_sided = False
    if i == 0:
        nb = [(1, jj) for jj in range(tube.n_theta)] if tube.n_r > 1 else []
        one_sided = tube.n_r < 2
    else:
        nb.append((i - 1, j if i - 1 > 0 else 0))
        if i + 1 < tube.n_r:
            nb.append((i + 1, j))
        else:
            one_sided = True
        if tube.n_theta > 2:
            nb += [(i, (j - 1) % tube.n_theta), (i, (j + 1) % tube.n_theta)]
    return nb, one_sided


def transverse_derivative(tube: StreamTube, q, direction: str, i: int, j: int, k: int):
    """Derivative of a sampled tube quantity along e2 or e3 at sample (i, j, k).

    ``q`` has shape ``(n_r, n_theta, n_s)``. The gradient is fitted by least
    squares to the differences with neighbouring streamlines at equal ``s``,
    closed by the along-stream derivative from the same streamline.

    Returns ``(value, one_sided)``.
    """
    if direction not in ("e2", "e3"):
        raise ValueError("direction must be 'e2' or 'e3'")
    q = np.asarray(q, dtype=float)
    nb, one_sided = _neighbors(tube, i, j)
    x0 = tube.x[i, j, k]
    rows = [tube.x[a, b, k] - x0 for a, b in nb]
    rhs = [q[a, b, k] - q[i, j, k] for a, b in nb]
    nv = int(tube.n_valid[i, j])
    line = q[i, j, :nv]
    if 0 < k < nv - 1:
        dq_ds = (line[k + 1] - line[k - 1]) / (2 * tube.ds)
    elif k == 0:
        dq_ds = (line[1] - line[0]) / tube.ds
        one_sided = True
    else:
        dq_ds = (line[k] - line[k - 1]) / tube.ds
        one_sided = True
    e = tube.frame.axes(x0)
    rows.append(e[0])
    rhs.append(dq_ds)
    A = np.array(rows)
    g, *_ = np.linalg.lstsq(A, np.array(rhs), rcond=None)
    axis = 1 if direction == "e2" else 2
    return float(g @ e[axis]), one_sided


def write_tube_csv(tube: StreamTube, path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["seed_i", "seed_j", "s", "x", "y", "z"])
        for i, j, s, x, y, z in tube.samples():
            w.writerow([i, j, repr(float(s)), repr(float(x)), repr(float(y)), repr(float(z))])
    return path


COARSE_STEP = 0.02


def locate_on_disc(v, base, normal, x, ds: float, max_length: float = 1e3, eps_v: float = EPS_V,
                   newton_tol: float = 1e-14):
    """Invert the flow map onto the plane through ``base`` with normal ``normal``.

    For each point ``x`` find the signed arclength ``S`` and the foot point
    ``y`` on the plane with ``x = flow_S(y)``. All points of one call share the
    same number of RK4 steps ``N = ceil(max|S| / ds)``, so the map is smooth
    in ``x`` within a call (finite-difference stencils rely on that).

    Returns ``(y, S, N)``.
    """
    x = np.asarray(x, dtype=float)
    shape = x.shape[:-1]
    X = x.reshape(-1, 3)
    n = np.asarray(normal, dtype=float)
    base = np.asarray(base, dtype=float)
    f = lambda p: unit_flow_strict(v, p, eps_v)

    # coarse march toward the plane to bracket S
    H = max(ds, COARSE_STEP)
    d0 = (X - base) @ n
    S = np.zeros(len(X))
    pos = X.copy()
    d = d0.copy()
    direction = -np.sign(d0)
    active = d != 0
    travelled = 0.0
    while active.any():
        if travelled > max_length:
            raise DomainError("point does not reach the seed disc plane within max_length")
        idx = np.nonzero(active)[0]
        new = _rk4_step(f, pos[idx], direction[idx] * H)
        dn = (new - base) @ n
        crossed = np.sign(dn) != np.sign(d[idx])
        crossed |= dn == 0
        frac = np.where(crossed, d[idx] / np.where(crossed, d[idx] - dn, 1.0), 1.0)
        S[idx] += np.where(crossed, frac * H, H) * (-direction[idx])
        pos[idx] = new
        d[idx] = dn
        active[idx[crossed]] = False
        travelled += H

    def foot(Svals, steps):
        y = X.copy()
        hstep = -Svals / steps
        for _ in range(steps):
            y = _rk4_step(f, y, hstep)
        return y

    def newton(S, steps, tol, max_iter):
        prev = np.inf
        y = None
        for _ in range(max_iter):
            y = foot(S, steps)
            g = (y - base) @ n
            # d(g)/dS = -e1(y).n
            e1 = f(y)
            step = g / -(e1 @ n)
            S = S - step
            # foot(S - step) = y + step e1(y) + O(step^2)
            y = y + step[:, None] * e1
            size = np.max(np.abs(step))
            # stop once the quadratic remainder is below tol, or rounding stalls the contraction
            if size < tol or size > 0.5 * prev:
                break
            prev = size
        return S, y

    if np.any(S != 0):
        Nc = max(1, int(np.ceil(np.max(np.abs(S)) / H - 1e-9)))
        S, _ = newton(S, Nc, 1e-10, 8)
    N = max(1, int(np.ceil(np.max(np.abs(S)) / ds - 1e-9)))
    S, y = newton(S, N, np.sqrt(newton_tol), 6)
    return y.reshape(shape + (3,)), S.reshape(shape), N
