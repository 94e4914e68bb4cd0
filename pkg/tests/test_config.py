from __future__ import annotations

import copy
import json

import pytest

from greenpot.config import DEFAULT_TOLERANCES, ScenarioConfig, load_config
from greenpot.errors import ConfigError, ResolutionError
from greenpot.geometry import Arc, Circle, Disk, GridDomain

BASE = {
    "schema_version": 1,
    "name": "base",
    "experiment": "level-lemma",
    "compact_set": {"kind": "circle", "center": [0, 0], "radius": 0.25},
    "domains": [{"kind": "disk", "center": [0, 0], "radius": 1}],
    "h": 0.01,
    "panel_count": 64,
}


def cfg(**changes):
    raw = copy.deepcopy(BASE)
    for k, v in changes.items():
        if v is None:
            raw.pop(k, None)
        else:
            raw[k] = v
    return raw


def field_of(raw, require_experiment=True):
    with pytest.raises(ConfigError) as info:
        ScenarioConfig.from_dict(raw, require_experiment)
    return info.value


def test_valid_config_round_trip():
    c = ScenarioConfig.from_dict(cfg())
    assert c.panel_count == 64 and c.tolerance("energy_rel") == DEFAULT_TOLERANCES["energy_rel"]
    assert isinstance(c.build_compact_set(), Circle)
    assert isinstance(c.build_domain(0), Disk)
    assert ScenarioConfig.from_dict(c.to_dict()) == c


@pytest.mark.parametrize("changes, name", [
    ({"schema_version": 2}, "schema_version"),
    ({"bogus": 1}, "bogus"),
    ({"experiment": "nope"}, "experiment"),
    ({"h": -1}, "h"),
    ({"h": "0.1"}, "h"),
    ({"panel_count": 8}, "panel_count"),
    ({"panel_count": 2048}, "panel_count"),
    ({"tolerances": {"energy_rel": 0.7}}, "tolerances.energy_rel"),
    ({"tolerances": {"harmonicity": 1e-4}}, "tolerances.harmonicity"),
    ({"dimension": 3}, "dimension"),
    ({"evaluator": "fast"}, "evaluator"),
    ({"expect": "maybe"}, "expect"),
    ({"name": "bad name"}, "name"),
    ({"compact_set": None}, "compact_set"),
    ({"compact_set": {"kind": "blob"}}, "compact_set.kind"),
    ({"compact_set": {"kind": "circle", "center": [0, 0], "radius": -1}}, "compact_set.radius"),
    ({"domains": []}, "domains"),
    ({"domains": [BASE["domains"][0]] * 2}, "domains"),
    ({"domains": [{"kind": "disk", "center": [0], "radius": 1}]}, "domains[0].center"),
    ({"domains": [{"kind": "annulus", "center": [0, 0], "inner": 2, "outer": 1}]}, "domains[0]"),
    ({"domains": [{"kind": "grid", "base": {"kind": "disk", "center": [0, 0], "radius": 1},
                   "remove_points": [[1]]}]}, "domains[0].remove_points[0]"),
])
def test_errors_name_the_field(changes, name):
    err = field_of(cfg(**changes))
    assert err.field == name
    assert name in str(err)


def test_experiment_optional_for_solve():
    c = ScenarioConfig.from_dict(cfg(experiment=None, domains=[BASE["domains"][0]] * 2), require_experiment=False)
    assert c.experiment == ""
    assert field_of(cfg(experiment=None)).field == "experiment"


def test_overrides_are_validated():
    c = ScenarioConfig.from_dict(cfg())
    assert c.with_overrides(h=0.02, panel_count=128).h == 0.02
    with pytest.raises(ConfigError):
        c.with_overrides(h=0.0)


def test_arc_and_grid_domains():
    c = ScenarioConfig.from_dict(cfg(
        compact_set={"kind": "arc", "center": [0, 0], "radius": 1, "angles": [0, 1.5]},
        domains=[{"kind": "grid", "base": {"kind": "annulus", "center": [0, 0], "inner": 0.5, "outer": 3},
                  "remove_points": [[2, 0]]}]))
    assert isinstance(c.build_compact_set(), Arc)
    g = c.build_domain(0)
    assert isinstance(g, GridDomain) and not g.contains_many([[2.0, 0.0]])[0]


def test_grid_resolution_error_is_not_config_error():
    c = ScenarioConfig.from_dict(cfg(h=0.49, domains=[{"kind": "grid", "base": BASE["domains"][0]}]))
    with pytest.raises(ResolutionError):
        c.build_domain(0)


def test_load_json_and_yaml(tmp_path):
    p = tmp_path / "a.json"
    p.write_text(json.dumps(cfg(tolerances={"energy_rel": 1e-4})))
    assert load_config(p).tolerance("energy_rel") == 1e-4
    y = tmp_path / "a.yaml"
    y.write_text("schema_version: 1\nname: y\nexperiment: boundary-decay\n"
                 "compact_set: {kind: circle, center: [0, 0], radius: 0.25}\n"
                 "domains:\n  - {kind: disk, center: [0, 0], radius: 1}\nh: 0.02\n")
    assert load_config(y).experiment == "boundary-decay"


def test_load_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")
    bad = tmp_path / "bad.yaml"
    bad.write_text("a: [1, 2\nb: 3\n")
    with pytest.raises(ConfigError, match="line"):
        load_config(bad)
    lst = tmp_path / "list.json"
    lst.write_text("[1, 2]")
    with pytest.raises(ConfigError):
        load_config(lst)


def test_repository_configs_load():
    from pathlib import Path
    paths = sorted((Path(__file__).parents[1] / "configs").glob("*.*"))
    assert len(paths) >= 8
    for p in paths:
        load_config(p, require_experiment=False)
