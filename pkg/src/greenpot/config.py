"""Scenario configuration: parsing and validation of config documents.

A config is a JSON (or YAML) mapping::

    schema_version: 1
    name: concentric-level-lemma
    experiment: level-lemma
    compact_set: {kind: circle, center: [0, 0], radius: 0.25}
    domains: [{kind: disk, center: [0, 0], radius: 1}]
    h: 0.005
    panel_count: 256
    tolerances: {energy_rel: 0.03, measure_max: 0.02}
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any

import yaml

from .errors import ConfigError, GreenPotError
from .geometry import (Annulus, Arc, Ball3, Circle, Disk, FilledDisk, HalfPlane, Polyline, Segment,
                       rasterize_domain)

__all__ = [
    "SCHEMA_VERSION",
    "EXPERIMENTS",
    "EXPERIMENT_TOLERANCES",
    "DEFAULT_TOLERANCES",
    "ScenarioConfig",
    "load_config",
    "parse_domain",
    "parse_compact_set",
]

SCHEMA_VERSION = 1
EXPERIMENTS = (
    "level-lemma",
    "theorem1-forward",
    "theorem1-reconstruct",
    "inversion-counterexample",
    "harmonic-difference",
    "boundary-decay",
)
DEFAULT_TOLERANCES = {
    "energy_rel": 0.02,
    "measure_max": 0.02,
    "harmonicity": 1e-6,
    "area_rel": 0.03,
    "area_abs": 0.1,
}
EXPERIMENT_TOLERANCES = {
    "level-lemma": ("energy_rel", "measure_max"),
    "theorem1-forward": ("energy_rel", "measure_max"),
    "theorem1-reconstruct": ("area_rel", "measure_max"),
    "inversion-counterexample": ("energy_rel", "measure_max", "area_abs"),
    "harmonic-difference": ("harmonicity", "energy_rel"),
    "boundary-decay": (),
}
DOMAIN_COUNT = {
    "level-lemma": 1,
    "theorem1-forward": 2,
    "theorem1-reconstruct": 2,
    "inversion-counterexample": 1,
    "harmonic-difference": 2,
    "boundary-decay": 1,
}


def _get(d: dict, key: str, where: str, kind=None):
    if key not in d:
        raise ConfigError(f"{where}.{key}", "missing")
    v = d[key]
    if kind is not None:
        try:
            v = kind(v)
        except (TypeError, ValueError):
            raise ConfigError(f"{where}.{key}", f"expected {kind.__name__}, got {d[key]!r}") from None
    return v


def _point(d: dict, key: str, where: str, dim: int = 2):
    v = _get(d, key, where)
    if not isinstance(v, (list, tuple)) or len(v) != dim:
        raise ConfigError(f"{where}.{key}", f"expected a list of {dim} numbers")
    try:
        return tuple(float(c) for c in v)
    except (TypeError, ValueError):
        raise ConfigError(f"{where}.{key}", "coordinates must be numbers") from None


def _positive(d: dict, key: str, where: str) -> float:
    v = _get(d, key, where, float)
    if not (v > 0 and math.isfinite(v)):
        raise ConfigError(f"{where}.{key}", f"must be positive, got {v}")
    return v


def parse_domain(d: dict, where: str = "domain", h: float | None = None):
    """Build a domain from its config mapping.

    Kind ``grid`` rasterizes ``base`` at spacing ``h`` (or its own ``h``)
    and then unmasks the cells containing ``remove_points``.
    """
    if not isinstance(d, dict):
        raise ConfigError(where, "expected a mapping")
    kind = _get(d, "kind", where, str).lower()
    try:
        if kind == "disk":
            return Disk(_point(d, "center", where), _positive(d, "radius", where))
        if kind == "annulus":
            return Annulus(_point(d, "center", where), _positive(d, "inner", where), _positive(d, "outer", where))
        if kind == "halfplane":
            return HalfPlane(_point(d, "point", where), _point(d, "normal", where))
        if kind == "ball3":
            return Ball3(_point(d, "center", where, 3), _positive(d, "radius", where))
        if kind == "grid":
            base = parse_domain(_get(d, "base", where), f"{where}.base", h)
            spacing = d.get("h", h)
            if spacing is None:
                raise ConfigError(f"{where}.h", "grid domains need a spacing")
            bbox = d.get("bbox")
            remove = [tuple(map(float, p)) for p in d.get("remove_points", [])]
    except ConfigError:
        raise
    except GreenPotError as exc:
        raise ConfigError(where, str(exc)) from None
    if kind != "grid":
        raise ConfigError(f"{where}.kind", f"unknown domain kind {kind!r}")
    # rasterization errors (resolution, connectivity) are computational, not config, failures
    grid = rasterize_domain(base, float(spacing), tuple(bbox) if bbox else None)
    return grid.remove_cells(remove) if remove else grid


def parse_compact_set(d: dict, where: str = "compact_set"):
    if not isinstance(d, dict):
        raise ConfigError(where, "expected a mapping")
    kind = _get(d, "kind", where, str).lower()
    try:
        if kind in ("circle", "filled_disk"):
            cls = Circle if kind == "circle" else FilledDisk
            return cls(_point(d, "center", where), _positive(d, "radius", where))
        if kind == "arc":
            angles = _get(d, "angles", where)
            if not isinstance(angles, (list, tuple)) or len(angles) != 2:
                raise ConfigError(f"{where}.angles", "expected [start, stop] in radians")
            return Arc(_point(d, "center", where), _positive(d, "radius", where),
                       float(angles[0]), float(angles[1]))
        if kind == "segment":
            return Segment(_point(d, "start", where), _point(d, "end", where))
        if kind == "polyline":
            verts = _get(d, "vertices", where)
            return Polyline(tuple(tuple(float(c) for c in v) for v in verts))
    except ConfigError:
        raise
    except (GreenPotError, TypeError, ValueError) as exc:
        raise ConfigError(where, str(exc)) from None
    raise ConfigError(f"{where}.kind", f"unknown compact set kind {kind!r}")


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    experiment: str
    compact_set: dict
    domains: list
    h: float
    panel_count: int
    tolerances: dict = field(default_factory=dict)
    dimension: int = 2
    evaluator: str = "auto"
    expect: str = "pass"
    params: dict = field(default_factory=dict)
    schema_version: int = SCHEMA_VERSION

    @classmethod
    def from_dict(cls, raw: Any, require_experiment: bool = True) -> "ScenarioConfig":
        if not isinstance(raw, dict):
            raise ConfigError("<root>", "config must be a mapping")
        version = raw.get("schema_version")
        if version != SCHEMA_VERSION:
            raise ConfigError("schema_version", f"expected {SCHEMA_VERSION}, got {version!r}")
        known = set(cls.__dataclass_fields__)
        extra = set(raw) - known
        if extra:
            raise ConfigError(sorted(extra)[0], "unknown key")
        experiment = raw.get("experiment", "")
        if require_experiment or experiment:
            if experiment not in EXPERIMENTS:
                raise ConfigError("experiment", f"unknown experiment {experiment!r}; expected one of {EXPERIMENTS}")
        tol = raw.get("tolerances", {}) or {}
        if not isinstance(tol, dict):
            raise ConfigError("tolerances", "expected a mapping")
        if experiment:
            allowed = EXPERIMENT_TOLERANCES[experiment]
            for key in tol:
                if key not in allowed:
                    raise ConfigError(f"tolerances.{key}", f"not used by experiment {experiment}; allowed {allowed}")
        cfg = cls(
            name=str(raw.get("name", "scenario")),
            experiment=experiment,
            compact_set=raw.get("compact_set"),
            domains=list(raw.get("domains") or []),
            h=raw.get("h"),
            panel_count=raw.get("panel_count", 128),
            tolerances={k: tol[k] for k in tol},
            dimension=raw.get("dimension", 2),
            evaluator=raw.get("evaluator", "auto"),
            expect=raw.get("expect", "pass"),
            params=dict(raw.get("params") or {}),
        )
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if not self.name or not all(c.isalnum() or c in "-_." for c in self.name):
            raise ConfigError("name", "must be a nonempty identifier of letters, digits, '-', '_' or '.'")
        if self.dimension != 2:
            raise ConfigError("dimension", "scenarios run in the plane only (dimension 2)")
        if not isinstance(self.h, (int, float)) or not self.h > 0:
            raise ConfigError("h", f"must be a positive number, got {self.h!r}")
        if not isinstance(self.panel_count, int) or not 16 <= self.panel_count <= 1024:
            raise ConfigError("panel_count", f"must be an integer in [16, 1024], got {self.panel_count!r}")
        for key, value in self.tolerances.items():
            if key not in DEFAULT_TOLERANCES:
                raise ConfigError(f"tolerances.{key}", "unknown tolerance")
            if not isinstance(value, (int, float)) or not 0 < value < 0.5:
                raise ConfigError(f"tolerances.{key}", f"must lie in (0, 0.5), got {value!r}")
        if self.evaluator not in ("auto", "grid"):
            raise ConfigError("evaluator", "must be 'auto' or 'grid'")
        if self.expect not in ("pass", "fail"):
            raise ConfigError("expect", "must be 'pass' or 'fail'")
        if self.compact_set is None:
            raise ConfigError("compact_set", "missing")
        parse_compact_set(self.compact_set)
        if not self.domains:
            raise ConfigError("domains", "at least one domain is required")
        if self.experiment:
            need = DOMAIN_COUNT[self.experiment]
            if len(self.domains) != need:
                raise ConfigError("domains", f"experiment {self.experiment} needs {need} domain(s), got {len(self.domains)}")
        for i, d in enumerate(self.domains):
            # shape checks only; grids are built when the scenario runs
            _check_domain_shape(d, f"domains[{i}]")

    # ------------------------------------------------------------------

    def tolerance(self, key: str) -> float:
        return float(self.tolerances.get(key, DEFAULT_TOLERANCES[key]))

    def used_tolerances(self) -> dict:
        return {k: self.tolerance(k) for k in EXPERIMENT_TOLERANCES.get(self.experiment, ())}

    def build_compact_set(self):
        return parse_compact_set(self.compact_set)

    def build_domain(self, i: int):
        return parse_domain(self.domains[i], f"domains[{i}]", self.h)

    def with_overrides(self, h: float | None = None, panel_count: int | None = None) -> "ScenarioConfig":
        cfg = replace(self, h=self.h if h is None else h,
                      panel_count=self.panel_count if panel_count is None else panel_count)
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        return asdict(self)


def _check_domain_shape(d, where: str) -> None:
    if not isinstance(d, dict):
        raise ConfigError(where, "expected a mapping")
    kind = str(d.get("kind", "")).lower()
    if kind == "grid":
        _check_domain_shape(d.get("base"), f"{where}.base")
        for k, p in enumerate(d.get("remove_points", [])):
            if not isinstance(p, (list, tuple)) or len(p) != 2:
                raise ConfigError(f"{where}.remove_points[{k}]", "expected [x, y]")
        return
    parse_domain(d, where)


def load_config(path, require_experiment: bool = True) -> ScenarioConfig:
    """Read a JSON or YAML config file and validate it."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError("<file>", f"cannot read {path}: {exc.strerror}") from None
    try:
        # JSON first: YAML 1.1 reads exponent literals such as 1e-4 as strings
        raw = json.loads(text)
    except ValueError:
        raw = None
    try:
        raw = yaml.safe_load(text) if raw is None else raw
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"line {mark.line + 1}" if mark is not None else "<file>"
        raise ConfigError(where, "parse error") from None
    return ScenarioConfig.from_dict(raw, require_experiment)
