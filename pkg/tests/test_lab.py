from __future__ import annotations

import json
import math

import pytest

from greenpot.config import ScenarioConfig
from greenpot.lab import run_scenario, run_scenarios

CIRCLE = {"kind": "circle", "center": [0, 0], "radius": 0.25}


def disk(r, cx=0.0):
    return {"kind": "disk", "center": [cx, 0], "radius": r}


def scenario(experiment, domains, h=0.02, panels=64, **extra):
    raw = {"schema_version": 1, "name": experiment, "experiment": experiment, "compact_set": CIRCLE,
           "domains": domains, "h": h, "panel_count": panels}
    raw.update(extra)
    return ScenarioConfig.from_dict(raw)


def assert_checks_cover_tolerances(m, cfg):
    for name in cfg.used_tolerances():
        assert name in m.checks
    if m.passed:
        assert all(c.passed for c in m.checks.values())


def test_level_lemma_passes():
    cfg = scenario("level-lemma", [disk(1)])
    m = run_scenario(cfg)
    assert m.passed and m.ok, m.reason
    assert_checks_cover_tolerances(m, cfg)


def test_forward_same_domain_passes_and_distinct_fails():
    cfg = scenario("theorem1-forward", [disk(1), disk(1)])
    m = run_scenario(cfg)
    assert m.passed, m.reason
    bad = scenario("theorem1-forward", [disk(1), disk(2)], expect="fail")
    m = run_scenario(bad)
    assert not m.passed and m.ok
    assert not m.checks["energy_rel"].passed
    assert_checks_cover_tolerances(m, bad)


def test_reconstruct_recovers_smaller_disk():
    cfg = scenario("theorem1-reconstruct", [disk(0.5), disk(1)])
    m = run_scenario(cfg)
    assert m.passed, m.reason
    assert_checks_cover_tolerances(m, cfg)


def test_reconstruct_swaps_roles():
    m = run_scenario(scenario("theorem1-reconstruct", [disk(1), disk(0.5)]))
    assert m.passed and any("swapped" in f for f in m.flags)


def test_reconstruct_reports_hypothesis_failure():
    m = run_scenario(scenario("theorem1-reconstruct", [disk(0.255), disk(1)], h=0.005))
    assert not m.passed
    assert "hypothesis-failure" in m.flags
    assert "hypothesis" in m.reason


def test_inversion_counterexample_circle():
    cfg = scenario("inversion-counterexample", [{"kind": "annulus", "center": [0, 0], "inner": 0.5, "outer": 3}],
                   compact_set={"kind": "circle", "center": [0, 0], "radius": 1})
    m = run_scenario(cfg)
    assert m.passed, m.reason
    assert m.checks["area_abs"].sense == ">"
    assert_checks_cover_tolerances(m, cfg)


def test_inversion_self_inverse_is_flagged():
    cfg = scenario("inversion-counterexample", [{"kind": "annulus", "center": [0, 0], "inner": 0.5, "outer": 2}],
                   compact_set={"kind": "circle", "center": [0, 0], "radius": 1})
    m = run_scenario(cfg)
    assert not m.passed
    assert any("not a counterexample" in f for f in m.flags)


def test_harmonic_difference_concentric():
    cfg = scenario("harmonic-difference", [disk(1), disk(2)], tolerances={"harmonicity": 1e-4})
    m = run_scenario(cfg)
    assert m.passed, m.reason
    # u = U1 - U2 is the constant I1 - I2 = -log 2 on K
    assert m.metrics["u_on_K_mean"] == pytest.approx(-math.log(2), rel=0.02)


def test_boundary_decay():
    m = run_scenario(scenario("boundary-decay", [disk(1)]))
    assert m.passed, m.reason
    assert m.checks["decay"].value <= m.checks["decay"].limit


def test_computational_error_is_recorded():
    cfg = scenario("theorem1-forward", [disk(1), {"kind": "grid", "base": disk(1)}], h=0.49)
    m = run_scenario(cfg)
    assert not m.passed and "Error" in m.reason
    assert math.isnan(m.checks["energy_rel"].value)


def test_rerun_is_deterministic():
    cfg = scenario("level-lemma", [disk(1)])
    a, b = run_scenario(cfg), run_scenario(cfg)
    assert a.metrics == b.metrics


def test_manifest_and_artifacts_written(tmp_path):
    cfg = scenario("level-lemma", [disk(1)])
    m = run_scenario(cfg, tmp_path)
    data = json.loads((tmp_path / "manifest.json").read_text())
    assert data["pass"] is True and data["ok"] is True
    assert set(data["checks"]) >= set(cfg.used_tolerances())
    assert data["scenario"]["name"] == "level-lemma"
    assert m.artifacts
    for name in m.artifacts:
        assert (tmp_path / name).exists()


def test_run_scenarios_parallel(tmp_path):
    cfgs = [scenario("boundary-decay", [disk(1)], name="a"), scenario("level-lemma", [disk(1)], name="b")]
    ms = run_scenarios(cfgs, tmp_path, jobs=2)
    assert [m.scenario["name"] for m in ms] == ["a", "b"]
    assert (tmp_path / "a" / "manifest.json").exists() and (tmp_path / "b" / "manifest.json").exists()
