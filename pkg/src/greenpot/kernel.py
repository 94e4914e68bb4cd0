"""Logarithmic / Newtonian kernel and Green functions.

Every evaluator splits ``G(x, y) = kernel(x, y) + H(x, y)`` and exposes the
smooth part ``H`` directly, because the energy assembly and potential
fields need it at coincident points where ``G`` itself is infinite.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass

import numpy as np

from .dirichlet import GridField, interpolation_matrix, system_for
from .errors import DomainError
from .geometry import Ball3, Disk, GridDomain, HalfPlane, rasterize_domain

__all__ = [
    "KernelConstant",
    "kernel",
    "kernel_matrix",
    "green_disk",
    "green_halfplane",
    "green_ball3",
    "green_numeric",
    "GreenEvaluator",
    "FreeSpaceKernel",
    "DiskGreen",
    "HalfPlaneGreen",
    "Ball3Green",
    "GridGreen",
    "make_evaluator",
    "cell_mean_log_kernel",
]


@dataclass(frozen=True)
class KernelConstant:
    """``sigma``: area of the unit sphere; ``kappa``: Riesz-measure factor."""

    n: int
    sigma: float
    kappa: float

    @classmethod
    def for_dimension(cls, n: int) -> "KernelConstant":
        if n == 2:
            return cls(2, 2 * math.pi, 2 * math.pi)
        if n == 3:
            return cls(3, 4 * math.pi, 4 * math.pi)
        if n > 3:
            sigma = 2 * math.pi ** (n / 2) / math.gamma(n / 2)
            return cls(n, sigma, (n - 2) * sigma)
        raise ValueError(f"dimension must be >= 2, got {n}")


def kernel_matrix(X, Y, n: int = 2) -> np.ndarray:
    """Pairwise kernel values, ``+inf`` on coincident points."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    if X.shape[1] != n or Y.shape[1] != n:
        raise DomainError(f"dimension mismatch: points are not {n}-dimensional")
    d2 = np.zeros((len(X), len(Y)))
    for k in range(n):
        d2 += (X[:, k, None] - Y[None, :, k]) ** 2
    with np.errstate(divide="ignore"):
        if n == 2:
            return -0.5 * np.log(d2)
        return d2 ** (-(n - 2) / 2)


def kernel(x, y, n: int = 2) -> float:
    return float(kernel_matrix(np.asarray(x)[None], np.asarray(y)[None], n)[0, 0])


def cell_mean_log_kernel(h: float) -> float:
    """Mean of ``log(1/|x|)`` over a square cell of side ``h`` centered at 0."""
    a = h / 2
    return -(math.log(a) + 0.5 * (math.log(2) - 3 + math.pi / 2))


def _require_inside(evaluator, pts, what="point"):
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    if pts.shape[1] != evaluator.dim:
        raise DomainError(f"dimension mismatch: expected {evaluator.dim}-dimensional {what}s")
    ok = evaluator.contains(pts)
    if not np.all(ok):
        bad = pts[int(np.argmin(ok))]
        raise DomainError(f"{what} {bad.tolist()} is not strictly inside the domain")
    return pts


class GreenEvaluator:
    """Common surface of all Green-function evaluators."""

    domain = None
    dim = 2

    def contains(self, pts) -> np.ndarray:
        return self.domain.contains_many(pts)

    def correction(self, X, Y) -> np.ndarray:
        raise NotImplementedError

    def green_matrix(self, X, Y) -> np.ndarray:
        return kernel_matrix(X, Y, self.dim) + self.correction(X, Y)

    def __call__(self, x, y) -> float:
        return float(self.green_matrix(np.asarray(x)[None], np.asarray(y)[None])[0, 0])

    def correction_sum(self, X, Y, weights) -> np.ndarray:
        """``sum_j weights[j] * H(X[i], Y[j])`` for every ``X[i]``."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = np.empty(len(X))
        step = max(1, int(4_000_000 // max(1, len(Y))))
        for s in range(0, len(X), step):
            out[s:s + step] = self.correction(X[s:s + step], Y) @ weights
        return out

    def field_grid(self, h: float) -> GridDomain:
        return rasterize_domain(self.domain, h)


class FreeSpaceKernel(GreenEvaluator):
    """Bare kernel with ``H = 0``; not a Green function, used for checks."""

    def __init__(self, dim: int = 2):
        self.dim = dim

    def contains(self, pts) -> np.ndarray:
        return np.ones(len(np.atleast_2d(pts)), dtype=bool)

    def correction(self, X, Y) -> np.ndarray:
        return np.zeros((len(np.atleast_2d(X)), len(np.atleast_2d(Y))))


class DiskGreen(GreenEvaluator):
    """Image-charge Green function of a disk."""

    def __init__(self, domain: Disk):
        self.domain = domain
        self._c = np.asarray(domain.center)
        self._r = domain.radius

    def correction(self, X, Y) -> np.ndarray:
        X = _require_inside(self, X)
        Y = _require_inside(self, Y)
        z = X - self._c
        w = Y - self._c
        r2 = self._r**2
        zz = np.einsum("ij,ij->i", z, z)
        ww = np.einsum("ij,ij->i", w, w)
        # |r^2 - z conj(w)|^2 in real form
        q = r2 * r2 - 2 * r2 * (z @ w.T) + zz[:, None] * ww[None, :]
        return 0.5 * np.log(q) - math.log(self._r)


class HalfPlaneGreen(GreenEvaluator):
    """Reflection Green function of a half-plane."""

    def __init__(self, domain: HalfPlane):
        self.domain = domain
        self._p = np.asarray(domain.point)
        self._n = np.asarray(domain.normal)

    def reflect(self, Y) -> np.ndarray:
        Y = np.atleast_2d(Y)
        d = (Y - self._p) @ self._n
        return Y - 2 * d[:, None] * self._n

    def correction(self, X, Y) -> np.ndarray:
        X = _require_inside(self, X)
        Y = _require_inside(self, Y)
        return -kernel_matrix(X, self.reflect(Y), 2)


class Ball3Green(GreenEvaluator):
    """Kelvin-image Green function of a ball in three dimensions."""

    dim = 3

    def __init__(self, domain: Ball3):
        self.domain = domain
        self._c = np.asarray(domain.center)
        self._r = domain.radius

    def correction(self, X, Y) -> np.ndarray:
        X = _require_inside(self, X)
        Y = _require_inside(self, Y)
        z = X - self._c
        w = Y - self._c
        zz = np.einsum("ij,ij->i", z, z)
        ww = np.einsum("ij,ij->i", w, w)
        # (r/|w|) / |z - w*| rewritten so that w = 0 needs no special case
        q = zz[:, None] * ww[None, :] / self._r**2 - 2 * (z @ w.T) + self._r**2
        return -1.0 / np.sqrt(q)

    def field_grid(self, h):
        raise DomainError("grid fields are planar only")


def green_disk(center, radius, x, y) -> float:
    return DiskGreen(Disk(center, radius))(x, y)


def green_halfplane(point, normal, x, y) -> float:
    return HalfPlaneGreen(HalfPlane(point, normal))(x, y)


def green_ball3(center, radius, x, y) -> float:
    return Ball3Green(Ball3(center, radius))(x, y)


class GridGreen(GreenEvaluator):
    """Finite-difference Green function on a masked grid.

    ``H(., y)`` is the discrete harmonic field with ghost data
    ``-kernel(., y)``; off-lattice targets are reached by bilinear
    interpolation of that smooth field.  Single-cell holes are filled
    before solving: they stand for polar points, which a Green function
    does not see, whereas a pinned cell would act like a small disk.
    """

    cache_size = 32

    def __init__(self, grid: GridDomain, method: str = "auto"):
        self.domain = grid
        self.grid = grid.without_point_holes()
        self.system = system_for(self.grid, method)
        self._lock = threading.Lock()
        self._fields: dict = {}

    @property
    def h(self) -> float:
        return self.grid.h

    def check_sources(self, Y) -> np.ndarray:
        """Reject sources outside the grid or within 2h of its boundary."""
        Y = _require_inside(self, Y, "source")
        h = self.grid.h
        offsets = [(dx, dy) for dx in range(-2, 3) for dy in range(-2, 3) if dx * dx + dy * dy <= 4]
        for dx, dy in offsets:
            if not np.all(self.grid.contains_many(Y + h * np.array([dx, dy]))):
                raise DomainError("source point is within 2h of the grid boundary")
        return Y

    def _block(self) -> int:
        return int(min(256, max(8, 1.6e7 // max(1, self.system.n))))

    def correction_cells(self, Y) -> np.ndarray:
        """``H(cell, Y[j])`` on all masked cells, shape ``(n_cells, len(Y))``."""
        Y = self.check_sources(Y)
        data = -kernel_matrix(self.system.ghost_points, Y, 2)
        return self.system.solve(self.system.rhs(data))

    def correction(self, X, Y) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        Y = self.check_sources(Y)
        P = interpolation_matrix(self.grid, X)
        out = np.empty((len(X), len(Y)))
        step = self._block()
        for s in range(0, len(Y), step):
            data = -kernel_matrix(self.system.ghost_points, Y[s:s + step], 2)
            out[:, s:s + step] = P @ self.system.solve(self.system.rhs(data))
        return out

    def correction_sum_cells(self, Y, weights) -> np.ndarray:
        """``sum_j w_j H(cell, Y[j])`` on all masked cells with a single solve."""
        Y = self.check_sources(Y)
        data = np.zeros(self.system.n_ghost)
        step = self._block()
        for s in range(0, len(Y), step):
            data -= kernel_matrix(self.system.ghost_points, Y[s:s + step], 2) @ weights[s:s + step]
        return self.system.solve(self.system.rhs(data))

    def correction_sum(self, X, Y, weights) -> np.ndarray:
        P = interpolation_matrix(self.grid, X)
        return P @ self.correction_sum_cells(Y, np.asarray(weights, dtype=float))

    def field_grid(self, h=None) -> GridDomain:
        if h is not None and not math.isclose(h, self.grid.h):
            raise DomainError("grid evaluator fields live on the evaluator's own grid")
        return self.grid

    def green_field(self, y) -> GridField:
        """``G(., y)`` sampled on the grid, cached per source point."""
        key = tuple(np.round(np.asarray(y, dtype=float), 15))
        with self._lock:
            hit = self._fields.get(key)
        if hit is not None:
            return hit
        y = self.check_sources(np.asarray(y, dtype=float)[None])[0]
        cells = self.grid.cell_centers()
        k = kernel_matrix(cells, y[None], 2)[:, 0]
        d = np.hypot(*(cells - y).T)
        # the cell holding the source carries its cell-mean kernel value
        k[d < self.h / 2] = cell_mean_log_kernel(self.h)
        values = np.full(self.grid.shape, np.nan)
        values[self.grid.mask] = k + self.correction_cells(y[None])[:, 0]
        ghosts = np.full(self.grid.shape, np.nan)
        ghosts[self.system.ghost_index >= 0] = -kernel_matrix(self.system.ghost_points, y[None], 2)[:, 0]
        field = GridField(self.grid, values, ghosts)
        with self._lock:
            if len(self._fields) >= self.cache_size:
                self._fields.pop(next(iter(self._fields)))
            self._fields.setdefault(key, field)
        return field


def green_numeric(domain: GridDomain, y) -> GridField:
    """Numeric ``G(., y)`` on ``domain``; see :class:`GridGreen`."""
    return GridGreen(domain).green_field(y)


def make_evaluator(domain, h: float | None = None, mode: str = "auto", bbox=None) -> GreenEvaluator:
    """Closed-form evaluator for model domains, grid evaluator otherwise.

    ``mode="grid"`` forces the finite-difference evaluator (needs ``h``).
    """
    if mode not in ("auto", "grid"):
        raise ValueError(f"unknown evaluator mode {mode!r}")
    if mode == "auto":
        if isinstance(domain, Disk):
            return DiskGreen(domain)
        if isinstance(domain, HalfPlane):
            return HalfPlaneGreen(domain)
        if isinstance(domain, Ball3):
            return Ball3Green(domain)
    if isinstance(domain, GridDomain) and (h is None or math.isclose(h, domain.h)):
        return GridGreen(domain)
    if h is None:
        raise DomainError(f"grid spacing required for a {type(domain).__name__} domain")
    return GridGreen(rasterize_domain(domain, h, bbox))
