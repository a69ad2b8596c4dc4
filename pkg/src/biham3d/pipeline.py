"""End-to-end runs: construct, obstruct and convergence sweeps.

Every run returns a :class:`~biham3d.report.Report`; errors raised by the
modules are captured as a structured error (exit code 2) instead of escaping.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .assemble import (
    PairConfig,
    PoissonPair,
    TubeSolution,
    assemble_pair,
    bihamiltonian_residual,
    compatibility_residual_vec,
    gradient_form_residual,
    jacobi_residual,
    lemma1_residual,
    reconstruct_hamiltonians,
    solve_tube,
    two_form_check,
)
from .bundle.chern import chern_number
from .bundle.mesh import icosphere, read_mesh, torus_mesh
from .bundle.torus import bott_probe
from .calc3 import DiffConfig, curl, jacobian
from .errors import Biham3dError, TubeConstructionError
from .flowline import StreamTube, build_tube, integrate_streamline, write_tube_csv
from .framekit import build_frame
from .report import Check, Report, summarize
from .riccati import compatibility_residual
from .scenario import Scenario

__all__ = ["Construction", "build_construction", "run_construct", "run_obstruct", "run_convergence"]


def _dot(a, b):
    return np.einsum("...i,...i->...", a, b)


def _norm(a):
    return np.linalg.norm(a, axis=-1)


def _with_domain(fn, contains):
    fn.contains = contains
    return fn


@dataclass
class Construction:
    """Everything built for one construct run, with fault injection applied to the callables."""

    v: Callable
    frame: object
    tube: StreamTube
    pair: PoissonPair
    solution: TubeSolution
    certificate: float
    J1: Callable
    J2: Callable
    H1: Callable
    H2: Callable
    phi: Callable
    alpha2_samples: np.ndarray
    check_points: np.ndarray
    check_index: tuple
    cfg: DiffConfig


def _transport_cfg(cfg: dict, v) -> DiffConfig:
    t = cfg["transport_diff"]
    backend = t["backend"]
    if backend == "auto":
        backend = "exact" if getattr(v, "jacobian", None) is not None else "fd"
    return DiffConfig(backend=backend, h=t["h"], order=t["order"])


def _check_indices(tube: StreamTube, n_s: int):
    """Check locations: the base streamline and every seed of rings >= 1, at ``n_s`` arclengths."""
    ns = len(tube.s)
    ks = np.unique(np.rint(np.linspace(0, ns - 1, max(1, n_s))).astype(int))
    seeds = [(0, 0)] + [(i, j) for i in range(1, tube.n_r) for j in range(tube.n_theta)]
    ii = np.array([p[0] for p in seeds])
    jj = np.array([p[1] for p in seeds])
    I = np.repeat(ii, len(ks))
    Jn = np.repeat(jj, len(ks))
    K = np.tile(ks, len(seeds))
    return I, Jn, K


def build_construction(scenario: Scenario, ds: Optional[float] = None, h: Optional[float] = None,
                       r_d: Optional[float] = None) -> Construction:
    cfg = scenario.config
    v = scenario.make_field()
    t = cfg["tube"]
    ds = float(ds if ds is not None else t["ds"])
    r_d = float(r_d if r_d is not None else t["r_d"])
    d = cfg["diff"]
    check_cfg = DiffConfig(backend=d["backend"], h=float(h if h is not None else d["h"]), order=d["order"])
    base = np.asarray(cfg["base"], dtype=float)
    frame = build_frame(v, reference=cfg["reference_axis"])
    tube = build_tube(v, frame, base, r_d, int(t["n_r"]), int(t["n_theta"]), float(t["L"]), ds)
    if not tube.complete:
        bad = tube.truncated_seeds()
        i, j = bad[0]
        raise TubeConstructionError(
            f"{len(bad)} streamline(s) truncated before L; first: seed {(i, j)}: {tube.truncation[i][j]}",
            failing_seeds=bad,
        )
    frame.check_region(tube.x.reshape(-1, 3))
    ini = cfg["initial"]
    convention = "flipped" if cfg["fault"] == "flipped_sign" else ini["convention"]
    pcfg = PairConfig(
        mu0=tuple(ini["mu"]),
        alpha0=None if ini["alpha"] is None else tuple(ini["alpha"]),
        seed_policy=ini["seed_policy"],
        convention=convention,
        quad_nodes=int(cfg["check"]["quad_nodes"]),
        quad_rule=cfg["check"]["quad_rule"],
    )
    pair = PoissonPair(v, frame, base, abs(ds), pcfg, _transport_cfg(cfg, v))
    sol = solve_tube(tube, pair)
    _, _, cert = assemble_pair(tube, sol.mu[0], sol.mu[1], sol.alpha[0], sol.alpha[1], pcfg.eps_sep)

    J1, J2 = pair.J(1), pair.J(2)
    H1, H2 = pair.H(1), pair.H(2)
    phi = pair.phi_field()
    alpha2 = sol.alpha[1]
    fault = cfg["fault"]
    if fault == "alpha_scaling":
        # rescale alpha2 by a factor that is not constant along the flow
        J2_clean = J2
        J2 = _with_domain(lambda x: np.exp(np.asarray(x)[..., 0])[..., None] * J2_clean(x), pair.contains)
        alpha2 = alpha2 * np.exp(tube.s)
    elif fault == "swap_hamiltonians":
        H1, H2 = H2, H1
    elif fault == "negate_phi":
        phi_clean = phi
        phi = _with_domain(lambda x: -phi_clean(x), pair.contains)
    idx = _check_indices(tube, int(cfg["check"]["n_s"]))
    pts = tube.x[idx]
    return Construction(v, frame, tube, pair, sol, cert, J1, J2, H1, H2, phi, alpha2, pts, idx, check_cfg)


def _identity_checks(c: Construction, scenario: Scenario, scale: float) -> list:
    """Residual checks of every identity at the check points."""
    x, cfg = c.check_points, c.cfg
    tol = lambda key: scenario.tolerance(key, scale)
    out = []
    for i, J in ((1, c.J1), (2, c.J2)):
        Jx = J(x)
        r = jacobi_residual(J, x, cfg) / _dot(Jx, Jx)
        out.append(summarize(f"jacobi_J{i}", r, tol("jacobi"), x, note="|J.curl J| / |J|^2"))
    J1x, J2x = c.J1(x), c.J2(x)
    r = compatibility_residual_vec(c.J1, c.J2, x, cfg) / (_norm(J1x) * _norm(J2x))
    out.append(summarize("compatibility", r, tol("compatibility"), x, note="relative to |J1||J2|"))
    b1, b2 = bihamiltonian_residual(c.v, c.J1, c.J2, c.H1, c.H2, x, cfg)
    out.append(summarize("bihamiltonian_J1_H2", b1, tol("bihamiltonian"), x, note="relative to |v|"))
    out.append(summarize("bihamiltonian_J2_H1", b2, tol("bihamiltonian"), x, note="relative to |v|"))
    g1, g2 = gradient_form_residual(c.J1, c.J2, c.phi, c.H1, c.H2, x, cfg)
    out.append(summarize("gradient_form_1", g1, tol("gradient_form"), x, note="J1 = +phi grad H1, relative"))
    out.append(summarize("gradient_form_2", g2, tol("gradient_form"), x, note="J2 = -phi grad H2, relative"))
    tf = two_form_check(c.v, c.phi, c.H1, c.H2, x, cfg) / _norm(c.v(x))
    out.append(summarize("two_form", tf, tol("two_form"), x, note="i_v Omega - phi dH1^dH2, relative"))
    p = c.pair
    l1 = lemma1_residual(c.frame, p.alpha(1), p.alpha(2), p.mu(1), p.mu(2), p.speed(), x, cfg)
    out.append(summarize("lemma1", l1, tol("lemma1"), x))
    sol = c.solution
    m1, m2, a1, a2, c312 = (np.moveaxis(a, -1, 0) for a in
                            (sol.mu[0], sol.mu[1], sol.alpha[0], c.alpha2_samples, sol.c312))
    co = compatibility_residual(m1, m2, a1, a2, c312, np.abs(c.tube.s))
    # near a pole of mu the sampled log-ratio steepens; scale by the term it balances
    co = co / (1.0 + np.abs(c312 * (m1 - m2)))
    out.append(summarize("compatibility_ode", co, tol("compatibility_ode"), np.moveaxis(c.tube.x, 2, 0),
                         note="d/ds ln(alpha1/alpha2) - C^3_12 (mu1 - mu2) on the tube samples, "
                              "relative to 1 + |C^3_12 (mu1 - mu2)|"))
    return out


def _construct_checks(c: Construction, scenario: Scenario, scale: float, full: bool = True):
    checks = _identity_checks(c, scenario, scale)
    diag = {}
    x, cfg, p = c.check_points, c.cfg, c.pair
    tol = lambda key: scenario.tolerance(key, scale)
    checks.append(Check("independence", c.certificate, tol("independence"), "lower",
                        note="min |J1 x J2| / (|J1||J2|) over the tube"))
    if not full:
        return checks, diag
    ev = p.evaluate(x)
    sol = c.solution
    mu_s = sol.mu[(slice(None),) + c.check_index]
    al_s = sol.alpha[(slice(None),) + c.check_index]
    agree = np.maximum(
        np.max(np.abs(ev["mu"] - mu_s) / (1.0 + np.abs(mu_s)), axis=0),
        np.max(np.abs(ev["alpha"] - al_s) / np.abs(al_s), axis=0),
    )
    checks.append(summarize("route_agreement", agree, tol("route_agreement"), x,
                            note="pointwise vs tube-sampled mu, alpha"))
    _, _, closed = reconstruct_hamiltonians(p, c.tube, check_cfg=cfg)
    for name, rep in closed.items():
        checks.append(Check(f"closedness_{name}", rep["max_curl"], tol("closedness"), "upper",
                            location=rep["location"], note="|curl(grad target)| / |target| on the seed disc"))
    # dilatation: J1 + f J2 stays Poisson iff f is constant along the flow
    norm12 = _norm(c.J1(x)) * _norm(c.J2(x))
    for key, f in (("dilatation_invariant", c.H1), ("dilatation_arclength", p.arclength())):
        J = _with_domain(lambda q, f=f: c.J1(q) + np.asarray(f(q))[..., None] * c.J2(q), p.contains)
        r = jacobi_residual(J, x, cfg) / norm12
        kind = "upper" if key == "dilatation_invariant" else "lower"
        checks.append(summarize(key, r, tol(key), x, kind=kind,
                                note="|J.curl J| / (|J1||J2|) for J = J1 + f J2"))
    ev0 = p.evaluate(c.tube.base)
    diag.update(
        {
            "tube_samples": int(np.prod(c.tube.x.shape[:3])),
            "check_points": int(len(x)),
            "mu_range": [[float(np.min(m)), float(np.max(m))] for m in sol.mu],
            "alpha_range": [[float(np.min(a)), float(np.max(a))] for a in sol.alpha],
            "mu_blowup_markers": int(np.sum(sol.blowup)),
            "phi_at_base": float(p.phi_field()(c.tube.base)),
            "J_at_base": [ev0["J1"].tolist(), ev0["J2"].tolist()],
            "seed_policy": p.config.seed_policy,
            "convention": p.config.convention,
            "transport_backend": p.cfg.backend,
        }
    )
    return checks, diag


def _error_report(report: Report, exc: Exception) -> Report:
    report.error = {"type": type(exc).__name__, "message": str(exc)}
    seeds = getattr(exc, "failing_seeds", None)
    if seeds:
        report.error["failing_seeds"] = [list(s) for s in seeds]
    axis = getattr(exc, "suggested_axis", None)
    if axis is not None:
        report.error["suggested_axis"] = np.asarray(axis).tolist()
    return report


def _new_report(command: str, scenario: Scenario) -> Report:
    return Report(command, scenario.name, scenario.config, scenario.config_hash)


def dump_samples(c: Construction, directory) -> list:
    """Write the tube samples and the sampled pair as CSV files; returns the paths."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    paths = [write_tube_csv(c.tube, d / "tube.csv")]
    sol = c.solution
    seeds_H = [c.pair.disc_integral(i, c.tube.seeds) for i in (1, 2)]
    speed = sol.speed
    sign = 1.0 if c.pair.config.convention == "artifact" else -1.0
    phi = sign * sol.alpha[0] * sol.alpha[1] * (sol.mu[0] - sol.mu[1]) / speed
    path = d / "pair_samples.csv"
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["seed_i", "seed_j", "s", "x", "y", "z", "mu1", "mu2", "alpha1", "alpha2", "phi", "H1", "H2"])
        nr, nt, ns = sol.mu.shape[1:]
        for i in range(nr):
            for j in range(nt):
                for k in range(ns):
                    w.writerow([i, j, repr(float(c.tube.s[k])), *(repr(float(q)) for q in c.tube.x[i, j, k]),
                                repr(float(sol.mu[0, i, j, k])), repr(float(sol.mu[1, i, j, k])),
                                repr(float(sol.alpha[0, i, j, k])), repr(float(sol.alpha[1, i, j, k])),
                                repr(float(phi[i, j, k])), repr(float(seeds_H[0][i, j])),
                                repr(float(seeds_H[1][i, j]))])
    paths.append(path)
    return paths


def run_construct(scenario: Scenario, tolerance_scale: float = 1.0, dump_dir=None) -> Report:
    """frame -> tube -> mu, alpha -> pair -> phi -> H -> residual checks."""
    report = _new_report("construct", scenario)
    try:
        c = build_construction(scenario)
        checks, diag = _construct_checks(c, scenario, tolerance_scale)
        report.checks.extend(checks)
        report.diagnostics.update(diag)
        if dump_dir is not None:
            report.diagnostics["dumped"] = [p.name for p in dump_samples(c, dump_dir)]
    except Biham3dError as exc:
        _error_report(report, exc)
    return report


# --------------------------------------------------------------------------
# obstruction probes


def _surface(chern_cfg: dict, level_up: bool = False):
    kind = chern_cfg["surface"]
    if kind == "icosphere":
        return icosphere(int(chern_cfg["subdivisions"]) + int(level_up), chern_cfg["radius"], chern_cfg["center"])
    if kind == "torus":
        f = 2 if level_up else 1
        return torus_mesh(chern_cfg["R"], chern_cfg["r"], f * int(chern_cfg["n_u"]), f * int(chern_cfg["n_v"]),
                          chern_cfg["center"])
    if not chern_cfg.get("path"):
        from .errors import ScenarioError

        raise ScenarioError("obstruct.chern.path is required for surface 'file'")
    mesh = read_mesh(chern_cfg["path"])
    return mesh.subdivide() if level_up else mesh


def run_obstruct(scenario: Scenario, tolerance_scale: float = 1.0) -> Report:
    """Chern number of Q on a closed surface and/or the torus integral of Xi."""
    report = _new_report("obstruct", scenario)
    cfg = scenario.config["obstruct"]
    expect = cfg.get("expect", {})
    tol = lambda key: scenario.tolerance(key, tolerance_scale)
    try:
        v = scenario.make_field()
        if "chern" in cfg["probes"]:
            cc = cfg["chern"]
            surf = _surface(cc)
            res = chern_number(v, surf, transport=cc["transport"])
            report.diagnostics["chern"] = {
                "surface": cc["surface"],
                "vertices": int(len(surf.vertices)),
                "triangles": int(len(surf.faces)),
                "euler_characteristic": surf.euler_characteristic,
                "integer": res.integer,
                "real": res.real,
                "max_fiber_angle": res.max_fiber_angle,
                "max_holonomy": res.max_holonomy,
            }
            report.add(Check("chern_defect", res.defect, tol("chern_defect"), note="|real - nearest integer|"))
            if cc["refine_check"]:
                fine = chern_number(v, _surface(cc, level_up=True), transport=cc["transport"])
                report.diagnostics["chern"]["refined_integer"] = fine.integer
                report.add(Check("chern_refinement_stable", float(abs(fine.integer - res.integer)), 0.5,
                                 note="integer unchanged under one refinement"))
            if res.integer != 0:
                report.verdicts.append(f"chern number {res.integer}: obstruction: normal bundle nontrivial")
            else:
                report.verdicts.append("chern number 0: no obstruction detected")
            if "chern" in expect:
                report.add(Check("expected_chern", float(abs(res.integer - int(expect["chern"]))), 0.5,
                                 note=f"expected {int(expect['chern'])}"))
        if "bott" in cfg["probes"]:
            bc = cfg["bott"]
            period = bc["period"] if bc["period"] is not None else getattr(v, "period", None)
            if period is None:
                report.verdicts.append("bott probe skipped: field declares no period (set obstruct.bott.period)")
            else:
                ref = bc["reference_axis"] or scenario.config["reference_axis"]
                probe = bott_probe(v, int(bc["n"]), float(period), reference=ref)
                val = probe.integral.value
                report.diagnostics["bott"] = {
                    "integral": val,
                    "error_estimate": probe.integral.error_estimate,
                    "n": probe.integral.n,
                    "period": probe.integral.period,
                    "max_abs_xi": probe.max_abs_xi,
                    "section_jacobi": [probe.jacobi_j1, probe.jacobi_j2],
                }
                report.add(Check("bott_quadrature", probe.integral.error_estimate,
                                 tol("bott_quadrature") * (1.0 + abs(val)),
                                 note="half-grid difference of the periodic rule"))
                if abs(val) <= tol("bott_integral") + probe.integral.error_estimate:
                    report.verdicts.append("integral of Xi vanishes: no obstruction detected (evidence, not proof)")
                else:
                    report.verdicts.append(f"integral of Xi = {val:.6g}: obstruction: Xi is not exact")
                if "bott_zero" in expect:
                    want = bool(expect["bott_zero"])
                    hit = abs(val) <= tol("bott_integral") + probe.integral.error_estimate
                    report.add(Check("expected_bott", 0.0 if hit == want else 1.0, 0.5,
                                     note=f"expected integral {'zero' if want else 'nonzero'}"))
    except Biham3dError as exc:
        _error_report(report, exc)
    return report


# --------------------------------------------------------------------------
# convergence


def _slope(hs, errs) -> float:
    return float(np.polyfit(np.log(hs), np.log(errs), 1)[0])


def order_checks(v, base, noise_floor: float = 1e-12):
    """Richardson-type slopes of the streamline integrator and the FD backend.

    Returns ``{name: (slope or None, errors)}``; ``None`` when the errors sit
    at the noise floor (for instance an exactly integrable field).
    """
    base = np.asarray(base, dtype=float)
    out = {}
    steps = [0.1, 0.05, 0.025, 0.0125]
    ends = [integrate_streamline(v, base, 1.0, d).x[-1] for d in steps]
    errs = [float(_norm(ends[k] - ends[k + 1])) for k in range(len(steps) - 1)]
    out["streamline_order"] = (_slope(steps[:-1], errs) if min(errs) > noise_floor else None, errs)
    jac = getattr(v, "jacobian", None)
    if jac is not None:
        exact = jac(base)
        for order, key in ((2, "fd_order2"), (4, "fd_order4")):
            hs = [0.04, 0.02, 0.01]
            e = [float(np.max(np.abs(jacobian(v, base, DiffConfig(h=h, order=order)) - exact))) for h in hs]
            out[key] = (_slope(hs, e) if min(e) > noise_floor else None, e)
    return out


def run_convergence(scenario: Scenario, levels: Optional[int] = None, tolerance_scale: float = 1.0) -> Report:
    """Identity residuals under joint refinement of (ds, h, r_d), with fitted slopes."""
    report = _new_report("converge", scenario)
    conv = scenario.config["convergence"]
    levels = int(levels if levels is not None else conv["levels"])
    floor = float(conv["noise_floor"])
    try:
        if levels < 2:
            from .errors import ScenarioError

            raise ScenarioError("convergence needs at least 2 levels")
        rows = []
        series = {}
        for k in range(levels):
            f = 0.5 ** k
            ds, h, r_d = conv["ds0"] * f, conv["h0"] * f, conv["r_d0"] * f
            c = build_construction(scenario, ds=ds, h=h, r_d=r_d)
            checks = _identity_checks(c, scenario, tolerance_scale)
            row = {"level": k, "ds": ds, "h": h, "r_d": r_d}
            for ch in checks:
                row[ch.name] = ch.value
                series.setdefault(ch.name, []).append(ch.value)
            rows.append(row)
        report.tables["levels"] = rows
        hs = [r["h"] for r in rows]
        slopes, at_floor = {}, []
        for name, vals in series.items():
            if min(vals) <= floor:
                at_floor.append(name)
                continue
            slopes[name] = _slope(hs, vals)
            report.add(Check(f"slope_{name}", slopes[name], scenario.tolerance("min_slope"), "lower",
                             note="fitted log-log slope under joint refinement"))
        report.tables["slopes"] = slopes
        report.diagnostics["at_noise_floor"] = at_floor
        v = scenario.make_field()
        orders = order_checks(v, scenario.config["base"], floor)
        report.tables["order_checks"] = {k: {"slope": s, "errors": e} for k, (s, e) in orders.items()}
        for key, (s, _) in orders.items():
            if s is None:
                report.diagnostics["at_noise_floor"].append(key)
            else:
                report.add(Check(key, s, scenario.tolerance(key), "lower", note="Richardson slope"))
        if report.diagnostics["at_noise_floor"]:
            report.verdicts.append("no slope fitted (errors at the noise floor): "
                                   + ", ".join(report.diagnostics["at_noise_floor"]))
    except Biham3dError as exc:
        _error_report(report, exc)
    return report
