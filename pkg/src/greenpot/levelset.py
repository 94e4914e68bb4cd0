"""Level domains of equilibrium potentials and domain reconstruction."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .dirichlet import GridField
from .equilibrium import DiscreteMeasure, DomainSolution, measure_deviation
from .errors import DomainError, LevelSetError
from .geometry import GridDomain, PanelSet, rasterize_domain

__all__ = [
    "LevelDomainReport",
    "extract_level_domain",
    "contains_compact",
    "verify_level_lemma",
    "reconstruct_domain",
]

_FOUR = ndimage.generate_binary_structure(2, 1)


@dataclass(frozen=True, eq=False)
class LevelDomainReport:
    alpha: float
    domain: GridDomain
    contains_K: bool
    parent_energy: float
    energy_in_level: float
    measure_in_level: DiscreteMeasure
    deviation_energy: float
    deviation_measure: float
    passed: bool

    @property
    def relative_energy_deviation(self) -> float:
        return self.deviation_energy / self.parent_energy


def extract_level_domain(field: GridField, alpha: float, panels: PanelSet | None = None) -> GridDomain:
    """Cells where ``field > alpha``, keeping the components that meet ``panels``' bounding box.

    Without ``panels`` the component holding the field maximum is kept.
    """
    grid = field.grid
    top = field.max()
    if not 0 < alpha < top:
        raise LevelSetError(f"level {alpha} must lie strictly between 0 and the field maximum {top}")
    above = grid.mask & (np.nan_to_num(field.values, nan=-np.inf) > alpha)
    labels, count = ndimage.label(above, structure=_FOUR)
    if count == 0:
        raise LevelSetError("empty level set")
    if panels is not None and len(panels):
        xmin, xmax, ymin, ymax = panels.bbox()
        X, Y = np.meshgrid(grid.xs, grid.ys, indexing="ij")
        h = grid.h
        box = (X >= xmin - h) & (X <= xmax + h) & (Y >= ymin - h) & (Y <= ymax + h)
        keep = np.unique(labels[box & above])
    else:
        keep = np.array([labels[np.unravel_index(np.nanargmax(field.values), grid.shape)]])
    keep = keep[keep > 0]
    if len(keep) == 0:
        raise LevelSetError("level set does not meet the compact set")
    return grid.with_mask(np.isin(labels, keep))


def contains_compact(domain: GridDomain, panels: PanelSet, margin: float) -> bool:
    """True iff every panel point sits in a masked cell whose ``margin``-neighborhood is masked."""
    if margin < 2 * domain.h * (1 - 1e-12):
        raise DomainError(f"margin {margin} must be at least twice the grid spacing {domain.h}")
    if len(panels) == 0:
        return True
    pts = panels.points()
    reach = int(math.ceil(margin / domain.h)) + 1
    if not np.all(domain.contains_many(pts)):
        return False
    i0, j0 = domain.cell_index(pts)
    for di in range(-reach, reach + 1):
        for dj in range(-reach, reach + 1):
            ci, cj = i0 + di, j0 + dj
            cx = domain.origin[0] + ci * domain.h
            cy = domain.origin[1] + cj * domain.h
            near = np.hypot(cx - pts[:, 0], cy - pts[:, 1]) <= margin
            if not near.any():
                continue
            inside = (ci >= 0) & (ci < domain.shape[0]) & (cj >= 0) & (cj < domain.shape[1])
            if np.any(near & ~inside):
                return False
            ok = np.ones(len(pts), dtype=bool)
            ok[inside] = domain.mask[ci[inside], cj[inside]]
            if np.any(near & ~ok):
                return False
    return True


def verify_level_lemma(K: PanelSet, D, alpha: float, tol: float, h: float, mode: str = "auto",
                       parent: DomainSolution | None = None, margin: float | None = None) -> LevelDomainReport:
    """Solve the equilibrium problem on the level domain ``{U > alpha}`` and compare.

    The level domain should carry the same measure with energy lowered by
    exactly ``alpha``.
    """
    if parent is None:
        parent = DomainSolution(K, D, h, mode)
    energy = parent.energy
    if not 0 < alpha < energy:
        raise LevelSetError(f"alpha={alpha} must lie in the open interval (0, {energy})")
    level = extract_level_domain(parent.field(), alpha, K)
    margin = 2 * level.h if margin is None else margin
    if not contains_compact(level, K, margin):
        raise LevelSetError("level domain does not contain K")
    inner = DomainSolution(K, level, mode="grid")
    dev_e = abs(inner.energy - (energy - alpha))
    dev_m = measure_deviation(parent.weights, inner.weights)
    passed = dev_e <= tol * energy and dev_m <= tol
    return LevelDomainReport(alpha, level, True, energy, inner.energy, inner.result.measure,
                             dev_e, dev_m, passed)


def reconstruct_domain(K: PanelSet, D2, I1: float, h: float, mode: str = "auto",
                       parent: DomainSolution | None = None, margin: float | None = None) -> GridDomain:
    """Level domain of the equilibrium potential on ``D2`` at height ``I(K, D2) - I1``."""
    if parent is None:
        parent = DomainSolution(K, D2, h, mode)
    I2 = parent.energy
    if I1 > I2 * (1 + 1e-9):
        raise LevelSetError("no reconstruction: target energy too large")
    alpha = I2 - I1
    margin = 2 * h if margin is None else margin
    if alpha <= 1e-9 * I2:
        # equal energies: the whole domain, up to the boundary collar of the raster
        return parent.grid if isinstance(parent.domain, GridDomain) else rasterize_domain(D2, h)
    level = extract_level_domain(parent.field(), alpha, K)
    if not contains_compact(level, K, margin):
        raise LevelSetError("reconstructed domain does not contain K")
    return level
