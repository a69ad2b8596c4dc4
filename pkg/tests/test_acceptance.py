"""Acceptance criteria 1-10 at their stated tolerances.

Each test records one ``criterion N: PASS|FAIL ...`` line, printed by the test
itself and again in the pytest terminal summary.
"""

from __future__ import annotations

import time
from pathlib import Path

import numpy as np
import pytest

from biham3d.bundle import (
    TriangulatedSurface,
    bott_probe,
    chern_number,
    icosphere,
    integrate_3form_torus,
    torus_mesh,
)
from biham3d.calc3 import DiffConfig, FormField, ext_deriv
from biham3d.fields import make_field
from biham3d.pipeline import build_construction, order_checks, run_construct, run_convergence
from biham3d.riccati import RiccatiCoefficients, lemma3_check, solve_mu
from biham3d.scenario import load_scenario

from conftest import ACCEPTANCE

SCENARIOS = Path(__file__).resolve().parents[1] / "scenarios"
SIGN_CHECKS = ("bihamiltonian_J1_H2", "bihamiltonian_J2_H1", "gradient_form_1", "gradient_form_2", "two_form")
FAULTS = ("alpha_scaling", "swap_hamiltonians", "negate_phi")


def record(n: int, ok: bool, detail: str):
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'} - {detail}"
    ACCEPTANCE[n] = line
    print(line)
    assert ok, line


_reports: dict = {}


def construct(name: str, **overrides):
    key = (name, tuple(sorted(overrides.items())))
    if key not in _reports:
        sc = load_scenario(SCENARIOS / f"{name}.json")
        if overrides:
            sc = sc.with_overrides(**overrides)
        t0 = time.perf_counter()
        rep = run_construct(sc)
        _reports[key] = (rep, time.perf_counter() - t0)
    return _reports[key]


def _const(a, b, c, s):
    return RiccatiCoefficients.from_functions(lambda t: a, lambda t: b, lambda t: c, s)


# --------------------------------------------------------------------------


def test_criterion_1_constant_field_end_to_end():
    rep, dt = construct("constant")
    names = ("jacobi_J1", "jacobi_J2", "compatibility", "bihamiltonian_J1_H2", "bihamiltonian_J2_H1",
             "lemma1", "two_form")
    checks = {c.name: c for c in rep.checks}
    worst = max(checks[n].value for n in names)
    c = build_construction(load_scenario(SCENARIOS / "constant.json"))
    x = c.check_points
    ev = c.pair.evaluate(x)
    closed = max(
        np.max(np.abs(ev["J1"] - [0.0, 1.0, 0.0])),
        np.max(np.abs(ev["J2"] - [0.0, 1.0, 1.0])),
        np.max(np.abs(c.pair.phi_field()(x) + 1.0)),
        np.max(np.abs(c.pair.H(1)(x) + x[:, 1])),
        np.max(np.abs(c.pair.H(2)(x) - x[:, 1] - x[:, 2])),
    )
    ok = rep.exit_code == 0 and worst <= 1e-8 and closed <= 1e-8 and dt < 1.0
    record(1, ok, f"max residual {worst:.2e}, closed-form error {closed:.2e}, runtime {dt:.2f} s")


def test_criterion_2_riccati_closed_forms():
    t0 = time.perf_counter()
    s = np.linspace(0.0, 3.0, 3001)
    e_tanh = np.max(np.abs(solve_mu(_const(1.0, 0.0, -1.0, s), 0.0).mu - np.tanh(s)))
    s = np.linspace(0.0, 1.2, 1201)
    e_tan = np.max(np.abs(solve_mu(_const(1.0, 0.0, 1.0, s), 0.0).mu - np.tan(s)))
    s = np.linspace(0.0, 0.75 * np.pi, 2356)
    sol = solve_mu(_const(1.0, 0.0, 1.0, s), 0.0)
    e_cont = abs(sol.mu[-1] + 1.0)
    dt = time.perf_counter() - t0
    ok = max(e_tanh, e_tan, e_cont) <= 1e-6 and sol.has_blowup() and dt < 1.0
    record(2, ok, f"tanh {e_tanh:.1e}, tan {e_tan:.1e}, mu(3pi/4)+1 = {e_cont:.1e}, runtime {dt:.2f} s")


def test_criterion_3_general_solution_relation():
    s = np.linspace(0.0, 1.0, 1001)
    cases = {
        "constant": _const(0.4, -0.2, 0.3, s),
        "smooth": RiccatiCoefficients.from_functions(
            lambda t: 0.5 * np.sin(2 * t), lambda t: 0.3 + 0.2 * np.cos(t), lambda t: -0.4 * np.exp(-t), s
        ),
    }
    rng = np.random.default_rng(2024)
    worst = 0.0
    for coeffs in cases.values():
        m1, m2 = solve_mu(coeffs, 0.0), solve_mu(coeffs, 1.0)
        for K in rng.uniform(-3.0, 3.0, 10):
            worst = max(worst, lemma3_check(m1, m2, float(K), coeffs).max_residual)
    record(3, worst <= 1e-5, f"max re-substitution residual {worst:.2e} over 2 x 10 values of K")


def test_criterion_4_abc_tube_and_refinement():
    rep, dt = construct("abc")
    failed = [c.name for c in rep.checks if not c.passed]
    conv = run_convergence(load_scenario(SCENARIOS / "abc.json"))
    slopes = {c.name: c.value for c in conv.checks if c.name.startswith("slope_")}
    low = min(slopes.values())
    ok = rep.exit_code == 0 and dt < 60.0 and conv.exit_code == 0 and low >= 1.9
    record(4, ok, f"{len(rep.checks)} checks, failed {failed}, runtime {dt:.1f} s, "
                  f"min refinement slope {low:.2f} over {len(slopes)} residuals")


def test_criterion_5_sign_convention_coherence():
    passing = [p.stem for p in sorted(SCENARIOS.glob("*.json")) if p.stem != "radial_origin"]
    incoherent = []
    for name in passing:
        rep, _ = construct(name)
        checks = {c.name: c for c in rep.checks}
        if rep.exit_code != 0 or not all(checks[n].passed for n in SIGN_CHECKS):
            incoherent.append(name)
    guard = {}
    for name in ("constant", "abc"):
        rep, _ = construct(name, fault="flipped_sign")
        guard[name] = max(c.value for c in rep.checks if c.name in SIGN_CHECKS)
    ok = not incoherent and min(guard.values()) >= 0.5
    record(5, ok, f"coherent on {passing}; restored sign slip breaks an identity by "
                  + ", ".join(f"{k} {v:.2f}" for k, v in guard.items()))


def test_criterion_6_dilatation():
    lines, ok = [], True
    for name in ("constant", "abc"):
        rep, _ = construct(name)
        checks = {c.name: c for c in rep.checks}
        inv, arc = checks["dilatation_invariant"], checks["dilatation_arclength"]
        ok &= inv.passed and arc.value >= 0.1
        lines.append(f"{name}: invariant f {inv.value:.1e} <= {inv.tolerance:.0e}, arclength {arc.value:.2f} >= 0.1")
    record(6, ok, "; ".join(lines))


def test_criterion_7_obstruction_probes():
    t0 = time.perf_counter()
    const = chern_number(make_field("constant"), icosphere(4))
    radial = chern_number(make_field("radial"), icosphere(4))
    radial5 = chern_number(make_field("radial"), icosphere(5))
    # Poincare-Hopf oracle for T S^2: chi = V - E + F
    sphere = icosphere(4)
    chi = sphere.euler_characteristic
    rot = make_field("rotation", eps=0.3)
    surf = torus_mesh()
    e1 = rot(surf.vertices) / np.linalg.norm(rot(surf.vertices), axis=1, keepdims=True)
    section = np.array([0.0, 0.0, 1.0]) - e1[:, 2:3] * e1  # nonvanishing off the z-axis: Q is trivial
    oracle_torus = 0 if np.min(np.linalg.norm(section, axis=1)) > 0 else None
    torus = chern_number(rot, surf)
    dt = time.perf_counter() - t0
    ok = (const.integer == 0 and const.defect <= 1e-3 and radial.integer == chi == 2
          and radial5.integer == radial.integer and torus.integer == oracle_torus and dt < 30.0)
    record(7, ok, f"constant {const.integer} (defect {const.defect:.1e}), radial {radial.integer} "
                  f"-> {radial5.integer} refined (oracle {chi}), rotation torus {torus.integer} "
                  f"(section oracle {oracle_torus}), runtime {dt:.1f} s")


def test_criterion_8_bott_probe_and_stokes():
    tol = load_scenario(SCENARIOS / "constant.json").tolerance("bott_quadrature")
    probe = bott_probe(make_field("constant", direction=(1.0, 0.0, 0.0)), n=16, period=1.0)
    rng = np.random.default_rng(8)
    stokes = []
    for _ in range(5):
        modes = rng.integers(-2, 3, size=(4, 3))
        amps = rng.normal(size=(4, 3))
        phases = rng.uniform(0, 2 * np.pi, size=(4, 3))

        def eta(x, modes=modes, amps=amps, phases=phases):
            out = np.zeros(x.shape)
            for k, a, ph in zip(modes, amps, phases):
                out += a * np.cos(2 * np.pi * (x @ k)[..., None] + ph)
            return out

        d_eta = ext_deriv(FormField(2, eta), DiffConfig(h=1e-4, order=4))
        stokes.append(abs(integrate_3form_torus(d_eta, n=16).value))
    ok = abs(probe.integral.value) <= tol and max(stokes) <= tol
    record(8, ok, f"constant-field integral {abs(probe.integral.value):.1e}, "
                  f"max Stokes integral {max(stokes):.1e} (tolerance {tol:.0e})")


def test_criterion_9_order_checks():
    res = order_checks(make_field("abc"), [0.3, 0.2, 0.1])
    s, f2, f4 = (res[k][0] for k in ("streamline_order", "fd_order2", "fd_order4"))
    ok = None not in (s, f2, f4) and s >= 3.9 and f2 >= 1.9 and f4 >= 3.8
    record(9, ok, f"streamline {s:.3f}, fd order 2 {f2:.3f}, fd order 4 {f4:.3f}")


@pytest.mark.parametrize("scenario", ["abc"])
def test_criterion_10_fault_detection(scenario):
    ratios = {}
    for fault in FAULTS:
        rep, _ = construct(scenario, fault=fault)
        ratios[fault] = max(c.value / c.tolerance for c in rep.checks if c.kind == "upper")
    ok = min(ratios.values()) >= 10.0
    record(10, ok, ", ".join(f"{k} {v:.1e}x tolerance" for k, v in ratios.items()))


def test_oriented_surface_sanity():
    # an orientation flip must reverse the sign of the obstruction
    surf = icosphere(3)
    flipped = TriangulatedSurface(surf.vertices, surf.faces[:, ::-1])
    assert chern_number(make_field("radial"), flipped).integer == -2
