"""Five-point finite-difference Dirichlet solver on masked grids.

Boundary data are imposed at ghost cells: every unmasked 4-neighbor of a
masked cell takes the datum evaluated at its own center.  When the data
come from a function harmonic across the boundary this is second-order
accurate; otherwise the effective boundary sits within one cell of the
true one.
"""

from __future__ import annotations

import math
import threading
from collections import OrderedDict
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy import ndimage

from .errors import DomainError, SolverError
from .geometry import GridDomain, PanelSet

__all__ = [
    "GridField",
    "DirichletSystem",
    "solve_dirichlet",
    "laplacian_residual",
    "interpolate",
    "interpolation_matrix",
    "RESIDUAL_TOL",
]

RESIDUAL_TOL = 1e-10
DIRECT_LIMIT = 1_000_000
SOR_MAX_SWEEPS = 100_000
_OFFSETS = ((1, 0), (-1, 0), (0, 1), (0, -1))


@dataclass(frozen=True, eq=False)
class GridField:
    """Values on the masked cells of ``grid`` (NaN elsewhere).

    ``ghost_values`` holds the boundary data used at ghost cells, NaN at
    every other location; it is ``None`` for fields not produced by a solve.
    """

    grid: GridDomain
    values: np.ndarray
    ghost_values: np.ndarray | None = None

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.shape != self.grid.shape:
            raise DomainError(f"field shape {vals.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(vals[self.grid.mask])):
            raise DomainError("field values must be finite on masked cells")
        vals[~self.grid.mask] = np.nan
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_function(cls, grid: GridDomain, fn: Callable) -> "GridField":
        vals = np.full(grid.shape, np.nan)
        vals[grid.mask] = fn(grid.cell_centers())
        return cls(grid, vals)

    def masked(self) -> np.ndarray:
        return self.values[self.grid.mask]

    def max(self) -> float:
        return float(np.max(self.masked()))

    def __add__(self, other: "GridField") -> "GridField":
        return GridField(self.grid, self.values + other.values)

    def __sub__(self, other: "GridField") -> "GridField":
        return GridField(self.grid, self.values - other.values)

    def __mul__(self, c: float) -> "GridField":
        return GridField(self.grid, self.values * c)

    __rmul__ = __mul__


class DirichletSystem:
    """Assembled (and factorized) five-point Laplacian for one grid."""

    def __init__(self, grid: GridDomain, method: str = "auto"):
        if not grid.is_connected:
            raise SolverError("grid domain is disconnected; solve components separately")
        self.grid = grid
        mask = grid.mask
        ghost = grid.ghost_mask()
        self.index = np.full(mask.shape, -1, dtype=np.int64)
        self.n = int(mask.sum())
        self.index[mask] = np.arange(self.n)
        self.ghost_index = np.full(mask.shape, -1, dtype=np.int64)
        self.n_ghost = int(ghost.sum())
        self.ghost_index[ghost] = np.arange(self.n_ghost)
        self.ghost_points = grid.cell_centers(ghost)

        rows, cols, link_rows, link_cols = [], [], [], []
        ii, jj = np.nonzero(mask)
        here = self.index[ii, jj]
        for di, dj in _OFFSETS:
            ni, nj = ii + di, jj + dj
            nbr = self.index[ni, nj]
            inner = nbr >= 0
            rows.append(here[inner])
            cols.append(nbr[inner])
            link_rows.append(here[~inner])
            link_cols.append(self.ghost_index[ni[~inner], nj[~inner]])
        r = np.concatenate(rows)
        c = np.concatenate(cols)
        diag = np.arange(self.n)
        self.A = sp.csc_matrix(
            (np.concatenate([-np.ones(len(r)), 4.0 * np.ones(self.n)]),
             (np.concatenate([r, diag]), np.concatenate([c, diag]))),
            shape=(self.n, self.n))
        lr = np.concatenate(link_rows)
        lc = np.concatenate(link_cols)
        # ghost-to-row incidence: b = S @ ghost_data
        self.S = sp.csr_matrix((np.ones(len(lr)), (lr, lc)), shape=(self.n, self.n_ghost))

        if method == "auto":
            method = "direct" if self.n <= DIRECT_LIMIT else "sor"
        if method not in ("direct", "sor"):
            raise ValueError(f"unknown solve method {method!r}")
        self.method = method
        self._lu = None
        if method == "direct":
            try:
                self._lu = spla.splu(self.A, permc_spec="MMD_AT_PLUS_A")
            except RuntimeError as exc:  # pragma: no cover - SPD matrix, should not happen
                raise SolverError(f"sparse factorization failed: {exc}") from exc

    # ------------------------------------------------------------------

    def rhs(self, ghost_data: np.ndarray) -> np.ndarray:
        return self.S @ ghost_data

    def solve(self, b: np.ndarray) -> np.ndarray:
        """Solve ``A u = b`` for one or several right-hand sides (columns)."""
        b = np.asarray(b, dtype=float)
        if self.method == "direct":
            u = self._lu.solve(b)
            # one refinement step keeps the max-norm residual at roundoff level
            u += self._lu.solve(b - self.A @ u)
            return u
        if b.ndim == 2:
            return np.column_stack([self._sor(b[:, k]) for k in range(b.shape[1])])
        return self._sor(b)

    def _sor(self, b: np.ndarray) -> np.ndarray:
        shape = self.grid.shape
        rhs = np.zeros(shape)
        rhs[self.grid.mask] = b
        u = np.zeros(shape)
        mask = self.grid.mask
        ii, jj = np.indices(shape)
        colors = [mask & ((ii + jj) % 2 == c) for c in (0, 1)]
        nb_count = np.zeros(shape)
        for di, dj in _OFFSETS:
            nb_count += np.roll(mask, (-di, -dj), axis=(0, 1))
        extent = max(shape) * self.grid.h
        omega = 2.0 / (1.0 + math.sin(math.pi * self.grid.h / extent))
        for sweep in range(SOR_MAX_SWEEPS):
            for color in colors:
                s = np.zeros(shape)
                for di, dj in _OFFSETS:
                    s += np.roll(u, (-di, -dj), axis=(0, 1))
                gs = (rhs + s) / 4.0
                u[color] += omega * (gs[color] - u[color])
            if sweep % 20 == 0 or sweep == SOR_MAX_SWEEPS - 1:
                res = np.max(np.abs(b - self.A @ u[mask]))
                if res < RESIDUAL_TOL:
                    return u[mask]
        raise SolverError(f"SOR did not reach residual {RESIDUAL_TOL} in {SOR_MAX_SWEEPS} sweeps")

    def residual(self, u: np.ndarray, b: np.ndarray) -> float:
        return float(np.max(np.abs(self.A @ u - b)))

    def to_field(self, u: np.ndarray, ghost_data: np.ndarray | None = None) -> GridField:
        vals = np.full(self.grid.shape, np.nan)
        vals[self.grid.mask] = u
        ghosts = None
        if ghost_data is not None:
            ghosts = np.full(self.grid.shape, np.nan)
            ghosts[self.ghost_index >= 0] = ghost_data
        return GridField(self.grid, vals, ghosts)


_CACHE: "OrderedDict[tuple, DirichletSystem]" = OrderedDict()
_CACHE_LOCK = threading.Lock()
_CACHE_SIZE = 3


def system_for(grid: GridDomain, method: str = "auto") -> DirichletSystem:
    """Factorized system for ``grid``, shared through a small LRU cache."""
    key = (grid.key, method)
    with _CACHE_LOCK:
        if key in _CACHE:
            _CACHE.move_to_end(key)
            return _CACHE[key]
    system = DirichletSystem(grid, method)
    with _CACHE_LOCK:
        _CACHE[key] = system
        while len(_CACHE) > _CACHE_SIZE:
            _CACHE.popitem(last=False)
    return system


BoundaryData = Union[float, np.ndarray, Callable[[np.ndarray], np.ndarray]]


def solve_dirichlet(domain: GridDomain, boundary_data: BoundaryData, method: str = "auto") -> GridField:
    """Discrete harmonic field on ``domain`` matching ``boundary_data`` at ghost cells.

    ``boundary_data`` is a constant, an array with one value per ghost cell
    (ordered as ``DirichletSystem.ghost_points``), or a callable mapping an
    ``(m, 2)`` array of ghost centers to values.
    """
    system = system_for(domain, method)
    if callable(boundary_data):
        g = np.asarray(boundary_data(system.ghost_points), dtype=float).reshape(-1)
    else:
        try:
            g = np.broadcast_to(np.asarray(boundary_data, dtype=float), (system.n_ghost,)).copy()
        except ValueError:
            raise DomainError(f"expected {system.n_ghost} boundary values, "
                              f"got shape {np.shape(boundary_data)}") from None
    if g.shape != (system.n_ghost,):
        raise DomainError(f"expected {system.n_ghost} boundary values, got {g.shape}")
    if not np.all(np.isfinite(g)):
        raise DomainError("boundary data must be finite at every ghost cell")
    b = system.rhs(g)
    u = system.solve(b)
    res = system.residual(u, b)
    if res > RESIDUAL_TOL * max(1.0, float(np.max(np.abs(g)))):
        raise SolverError(f"Dirichlet residual {res:.3e} exceeds tolerance")
    return system.to_field(u, g)


def _near_panels(grid: GridDomain, panels: PanelSet, cells: int) -> np.ndarray:
    """Mask of cells within ``cells`` lattice steps of any panel."""
    near = np.zeros(grid.shape, dtype=bool)
    if panels is None or len(panels) == 0:
        return near
    samples = [panels.midpoints, panels.starts, panels.ends]
    steps = int(np.ceil(np.max(panels.lengths) / grid.h))
    for t in np.linspace(0, 1, steps + 2)[1:-1]:
        samples.append(panels.starts + t * (panels.ends - panels.starts))
    i, j = grid.cell_index(np.vstack(samples))
    ok = (i >= 0) & (i < grid.shape[0]) & (j >= 0) & (j < grid.shape[1])
    near[i[ok], j[ok]] = True
    return ndimage.binary_dilation(near, structure=np.ones((3, 3), bool), iterations=cells)


def interior_cells(grid: GridDomain, panels: PanelSet | None = None, collar: int = 2) -> np.ndarray:
    """Masked cells at least ``collar`` cells away from the boundary and from ``panels``."""
    inner = ndimage.binary_erosion(grid.mask, structure=np.ones((3, 3), bool),
                                   iterations=collar, border_value=0)
    if panels is not None:
        inner &= ~_near_panels(grid, panels, collar)
    return inner


def laplacian_residual(field: GridField, panels: PanelSet | None = None,
                       collar: int = 2) -> tuple[float, tuple | None]:
    """Largest ``|discrete Laplacian|`` (five-point stencil divided by h^2).

    Cells within ``collar`` cells of the boundary are skipped, and so are
    cells near ``panels`` when they are given.
    """
    grid = field.grid
    cells = interior_cells(grid, panels, collar)
    if not cells.any():
        return 0.0, None
    v = np.where(grid.mask, field.values, 0.0)
    lap = -4.0 * v
    for di, dj in _OFFSETS:
        lap += np.roll(v, (-di, -dj), axis=(0, 1))
    lap = np.abs(lap) / grid.h**2
    lap[~cells] = -1.0
    flat = int(np.argmax(lap))
    loc = np.unravel_index(flat, lap.shape)
    return float(lap[loc]), (int(loc[0]), int(loc[1]))


def interpolation_matrix(grid: GridDomain, pts) -> sp.csr_matrix:
    """Sparse bilinear-interpolation operator from masked-cell values to ``pts``.

    Columns follow the masked-cell order of ``DirichletSystem.index``.
    """
    pts = np.asarray(pts, dtype=float).reshape(-1, 2)
    fx = (pts[:, 0] - grid.origin[0]) / grid.h
    fy = (pts[:, 1] - grid.origin[1]) / grid.h
    # snap near-integer offsets so a point on a cell center needs only that cell
    fx = np.where(np.abs(fx - np.rint(fx)) < 1e-9, np.rint(fx), fx)
    fy = np.where(np.abs(fy - np.rint(fy)) < 1e-9, np.rint(fy), fy)
    i0 = np.floor(fx).astype(int)
    j0 = np.floor(fy).astype(int)
    tx = fx - i0
    ty = fy - j0
    index = np.full(grid.shape, -1, dtype=np.int64)
    index[grid.mask] = np.arange(int(grid.mask.sum()))
    rows, cols, vals = [], [], []
    for di, dj, w in ((0, 0, (1 - tx) * (1 - ty)), (1, 0, tx * (1 - ty)),
                      (0, 1, (1 - tx) * ty), (1, 1, tx * ty)):
        ci, cj = i0 + di, j0 + dj
        inside = (ci >= 0) & (ci < grid.shape[0]) & (cj >= 0) & (cj < grid.shape[1])
        idx = np.full(len(pts), -1, dtype=np.int64)
        idx[inside] = index[ci[inside], cj[inside]]
        bad = (idx < 0) & (w > 0)
        if bad.any():
            k = int(np.argmax(bad))
            raise DomainError(f"point {pts[k].tolist()} is outside or next to unmasked cells")
        use = w > 0
        rows.append(np.nonzero(use)[0])
        cols.append(idx[use])
        vals.append(w[use])
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(len(pts), int(grid.mask.sum())))


def interpolate(field: GridField, p) -> float:
    """Bilinear interpolation of ``field`` at ``p``."""
    P = interpolation_matrix(field.grid, p)
    return float((P @ field.masked())[0])
