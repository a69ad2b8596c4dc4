from __future__ import annotations

import csv
import json
from pathlib import Path

import pytest

from biham3d.cli import main
from biham3d.errors import ScenarioError
from biham3d.pipeline import run_construct, run_obstruct
from biham3d.scenario import DEFAULTS, load_scenario

SCENARIOS = Path(__file__).resolve().parents[1] / "scenarios"
FAULTS = ("alpha_scaling", "swap_hamiltonians", "negate_phi", "flipped_sign")

# a short ABC tube keeps the CLI tests fast
SMALL_ABC = {"field": "abc", "tube": {"n_r": 2, "n_theta": 4, "L": 0.3, "ds": 0.01}}


def _write(tmp_path, cfg, name="s.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


def _run_json(capsys, argv):
    code = main(argv + ["--json"])
    return code, json.loads(capsys.readouterr().out)


# --------------------------------------------------------------------------
# scenario loading


def test_minimal_scenario_gets_defaults():
    sc = load_scenario({"field": "abc"})
    assert sc.field_name == "abc"
    assert sc.config["tube"] == DEFAULTS["tube"]
    assert sc.config["initial"]["seed_policy"] == "hamiltonian"
    assert sc.config["tolerances"]["jacobi"] == DEFAULTS["tolerances"]["jacobi"]


def test_partial_sections_are_merged():
    sc = load_scenario({"field": "abc", "tube": {"L": 0.5}})
    assert sc.config["tube"]["L"] == 0.5
    assert sc.config["tube"]["ds"] == DEFAULTS["tube"]["ds"]


@pytest.mark.parametrize(
    "cfg",
    [
        {"field": "abc", "tube": {"lenght": 1.0}},
        {"field": "abc", "colour": "red"},
        {"field": "nope"},
        {"tube": {}},
        {"field": "abc", "base": [1.0, 2.0]},
        {"field": "abc", "fault": "gremlins"},
        {"field": "abc", "tolerances": {"jacobi": -1.0}},
        {"field": "abc", "initial": {"seed_policy": "random"}},
    ],
)
def test_invalid_scenarios_are_rejected(cfg):
    with pytest.raises(ScenarioError):
        load_scenario(cfg)


def test_missing_or_malformed_file(tmp_path):
    with pytest.raises(ScenarioError):
        load_scenario(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ScenarioError):
        load_scenario(bad)


def test_tolerance_scale_only_loosens_upper_bounds():
    sc = load_scenario({"field": "abc"})
    assert sc.tolerance("jacobi", 10.0) == 10 * sc.tolerance("jacobi")
    assert sc.tolerance("dilatation_arclength", 10.0) == sc.tolerance("dilatation_arclength")
    assert sc.tolerance("min_slope", 10.0) == sc.tolerance("min_slope")


def test_config_hash_identifies_the_effective_configuration():
    a = load_scenario({"field": "abc"})
    b = load_scenario({"field": {"name": "abc"}, "tube": {"L": 1.0}})
    c = load_scenario({"field": "abc", "tube": {"L": 0.5}})
    assert a.config_hash == b.config_hash != c.config_hash


@pytest.mark.parametrize("path", sorted(SCENARIOS.glob("*.json")), ids=lambda p: p.stem)
def test_shipped_scenarios_load(path):
    assert load_scenario(path).name == path.stem


# --------------------------------------------------------------------------
# construct


def test_construct_constant_passes(capsys):
    code, rep = _run_json(capsys, ["construct", str(SCENARIOS / "constant.json")])
    assert code == 0 and rep["verdict"] == "pass" and rep["exit_code"] == 0
    assert rep["config"]["field"]["name"] == "constant"
    assert len(rep["provenance"]["config_hash"]) == 64
    for name in ("jacobi_J1", "compatibility", "bihamiltonian_J1_H2", "gradient_form_1", "two_form", "lemma1"):
        assert rep["checks"][name]["pass"]
    assert rep["diagnostics"]["phi_at_base"] == pytest.approx(-1.0)


def test_construct_text_summary(capsys):
    assert main(["construct", str(SCENARIOS / "constant.json")]) == 0
    out = capsys.readouterr().out
    assert "PASS" in out and "[ok] jacobi_J1" in out


def test_reports_are_deterministic(tmp_path):
    sc = load_scenario(SMALL_ABC)
    a = run_construct(sc).to_json(timestamp=False)
    b = run_construct(sc).to_json(timestamp=False)
    assert a == b


@pytest.mark.parametrize("fault", FAULTS)
def test_faults_are_flagged_well_beyond_tolerance(tmp_path, capsys, fault):
    path = _write(tmp_path, dict(SMALL_ABC, fault=fault))
    code, rep = _run_json(capsys, ["construct", path])
    assert code == 1 and rep["verdict"] == "fail"
    ratios = [c["value"] / c["tolerance"] for c in rep["checks"].values() if c["kind"] == "upper"]
    assert max(ratios) >= 10.0


def test_unfaulted_small_abc_passes(tmp_path, capsys):
    code, rep = _run_json(capsys, ["construct", _write(tmp_path, SMALL_ABC)])
    assert code == 0, [k for k, c in rep["checks"].items() if not c["pass"]]


def test_tolerance_scale_changes_the_verdict(tmp_path, capsys):
    cfg = dict(SMALL_ABC, tolerances={"two_form": 1e-14})
    path = _write(tmp_path, cfg)
    code, rep = _run_json(capsys, ["construct", path])
    assert code == 1 and not rep["checks"]["two_form"]["pass"]
    code, rep = _run_json(capsys, ["construct", path, "--tolerance-scale", "1e8"])
    assert code == 0 and rep["checks"]["two_form"]["tolerance"] == pytest.approx(1e-6)


def test_dump_samples(tmp_path, capsys):
    out = tmp_path / "dump"
    assert main(["construct", _write(tmp_path, SMALL_ABC), "--dump-samples", str(out)]) == 0
    capsys.readouterr()
    rows = list(csv.DictReader((out / "pair_samples.csv").open()))
    assert set(rows[0]) >= {"seed_i", "seed_j", "s", "x", "y", "z", "mu1", "mu2", "alpha1", "alpha2",
                            "phi", "H1", "H2"}
    assert len(rows) == 2 * 4 * 31
    assert (out / "tube.csv").exists()


def test_module_error_exit_code(capsys):
    code, rep = _run_json(capsys, ["construct", str(SCENARIOS / "radial_origin.json")])
    assert code == 2 and rep["verdict"] == "error"
    assert rep["error"]["type"] == "TubeConstructionError"
    assert rep["error"]["failing_seeds"]


def test_unloadable_scenario_exit_code(tmp_path, capsys):
    code, rep = _run_json(capsys, ["construct", _write(tmp_path, {"field": "nope"})])
    assert code == 2 and rep["error"]["type"] == "ScenarioError"
    assert main(["construct", str(tmp_path / "missing.json")]) == 2
    assert "error" in capsys.readouterr().err
    assert main(["construct", str(SCENARIOS / "constant.json"), "--tolerance-scale", "0"]) == 2


# --------------------------------------------------------------------------
# obstruct and converge


def test_obstruct_constant(capsys):
    code, rep = _run_json(capsys, ["obstruct", str(SCENARIOS / "constant.json")])
    assert code == 0
    assert any(v.startswith("chern number 0") for v in rep["verdicts"])
    assert any("no obstruction detected" in v for v in rep["verdicts"])


def test_obstruct_radial_sphere_reports_obstruction():
    rep = run_obstruct(load_scenario(SCENARIOS / "radial_sphere.json"))
    assert rep.exit_code == 0
    assert any(v.startswith("chern number 2: obstruction") for v in rep.verdicts)


def test_obstruct_expectation_mismatch_fails():
    sc = load_scenario({"field": "radial", "base": [0.6, 0.5, 0.4],
                        "obstruct": {"probes": ["chern"], "chern": {"subdivisions": 3}, "expect": {"chern": 0}}})
    rep = run_obstruct(sc)
    assert rep.exit_code == 1


def test_obstruct_bott_without_period_is_skipped(tmp_path, capsys):
    path = _write(tmp_path, {"field": "shear", "obstruct": {"probes": ["bott"]}})
    code, rep = _run_json(capsys, ["obstruct", path])
    assert code == 0 and any("skipped" in v for v in rep["verdicts"])


def test_obstruct_bott_on_stagnation_grid_is_an_error(tmp_path, capsys):
    # ABC with A = B = C = 1 vanishes at (pi/4, 5pi/4, 3pi/4), a node of the 16^3 grid on [0, 2pi)^3
    path = _write(tmp_path, {"field": "abc", "obstruct": {"probes": ["bott"]}})
    code, rep = _run_json(capsys, ["obstruct", path])
    assert code == 2 and rep["error"]["type"] == "VanishingFieldError"


def test_converge_on_constant_field_is_at_noise_floor(capsys):
    code, rep = _run_json(capsys, ["converge", str(SCENARIOS / "constant.json"), "--levels", "2"])
    assert code == 0
    assert rep["diagnostics"]["at_noise_floor"]
    assert len(rep["tables"]["levels"]) == 2
