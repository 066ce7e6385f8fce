import json
import math

import pytest

from chazy_curzon import papercheck as pc
from chazy_curzon.papercheck import CheckConfig, build_report, report_csv, report_json, run_checks


@pytest.fixture(scope="module")
def results():
    return {r.id: r for r in run_checks()}


def test_registry_complete(results):
    assert list(results) == [f"C{i}" for i in range(1, 8)]
    assert all(r.status in pc.STATUSES and r.status != "inconclusive" for r in results.values())


def test_status_follows_tolerance(results):
    for r in results.values():
        assert (r.status == "match") == (r.max_abs_discrepancy < r.tolerance)


def test_c1_localized_to_first_term(results):
    r = results["C1"]
    assert r.status == "mismatch" and r.sample_count == 1000
    assert r.evidence["first_term_ratio"] == "rho"
    assert r.evidence["max_abs_ratio_minus_rho"] < 1e-12
    assert r.evidence["max_abs_dp_z"] < 1e-12
    assert r.evidence["max_abs_discrepancy_other_terms"] < 1e-12


def test_c2_condition(results):
    r = results["C2"]
    assert r.status == "match"
    assert r.evidence["rho2_condition_max_rel_residual"] < 1e-12
    assert r.evidence["rho3_condition_max_rel_residual"] > 0.1
    assert r.evidence["solved_max_abs_F"] < 1e-12


def test_c3_closed_forms(results):
    r = results["C3"]
    assert r.status == "mismatch"
    assert r.max_abs_discrepancy == pytest.approx(2.0, rel=1e-10)  # exact sign flip
    assert r.evidence["max_rel_magnitude_discrepancy"] < 1e-10
    assert r.evidence["closed_pair_F_level_min"] == pytest.approx(1.0, abs=1e-12)
    assert r.evidence["closed_pair_F_level_max"] == pytest.approx(1.0, abs=1e-12)


def test_c4_window(results):
    r = results["C4"]
    assert r.status == "mismatch"
    assert r.evidence["closed_form_matches_window"] is True
    (lo, hi), = r.evidence["solved_admissible_intervals"]
    assert 2.0 < lo < 2.03


def test_c5_certifies_standard(results):
    r = results["C5"]
    assert r.status == "match" and r.max_abs_discrepancy < 1e-10
    combos = r.evidence["max_abs_residual"]
    assert set(combos) == {"standard/standard_minus", "standard/paper_plus", "paper/standard_minus", "paper/paper_plus"}
    assert all(v > 1e-3 for k, v in combos.items() if k != "standard/standard_minus")


def test_c6_reduced_hamiltonian(results):
    assert results["C6"].status == "mismatch"


def test_c7_slope(results):
    r = results["C7"]
    assert r.status == "match"
    ev = r.evidence
    assert ev["matching_convention"] == "printed"
    assert ev["printed_slope_vs_ln_eta"] == pytest.approx(ev["claimed_2g"], rel=0.05)
    assert ev["physical_slope_vs_ln_inv_h"] == pytest.approx(ev["physical_reference_1_over_sqrt_abs_vpp"], rel=0.05)
    assert "scan_error" in ev["closed_pair_rho0_1.5"]


def test_failure_becomes_inconclusive(monkeypatch):
    def boom(cfg):
        raise RuntimeError("synthetic failure")

    registry = list(pc.REGISTRY)
    registry[2] = pc._Check("C3", "broken", "tol_identity", boom)
    monkeypatch.setattr(pc, "REGISTRY", tuple(registry))
    res = run_checks(CheckConfig(n_points=20, n_rho=10))
    assert [r.id for r in res] == [f"C{i}" for i in range(1, 8)]
    assert res[2].status == "inconclusive" and "synthetic failure" in res[2].details
    assert math.isnan(res[2].max_abs_discrepancy)
    report = json.loads(report_json(build_report(res, CheckConfig(n_points=20, n_rho=10))))
    assert report["checks"][2]["max_abs_discrepancy"] is None


def test_report_deterministic_and_schema():
    cfg = CheckConfig(n_points=50, n_rho=20)
    a = report_json(build_report(run_checks(cfg), cfg))
    b = report_json(build_report(run_checks(cfg), cfg))
    assert a == b
    doc = json.loads(a)
    assert set(doc) == {"version", "config", "seed", "checks"}
    assert doc["seed"] == cfg.seed and doc["config"]["n_points"] == 50


def test_seed_changes_samples():
    a = run_checks(CheckConfig(seed=1, n_points=50, n_rho=10))[0]
    b = run_checks(CheckConfig(seed=2, n_points=50, n_rho=10))[0]
    assert a.max_abs_discrepancy != b.max_abs_discrepancy


def test_csv_summary(results):
    text = report_csv(list(results.values()))
    lines = text.splitlines()
    assert lines[0] == "id,status,max_abs_discrepancy,tolerance,sample_count,description"
    assert len(lines) == 8


def test_config_validation():
    with pytest.raises(ValueError):
        CheckConfig(n_points=0)
    with pytest.raises(ValueError):
        CheckConfig(rho_min=3.0, rho_max=2.0)
