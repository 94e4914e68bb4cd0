"""Domains, compact sets, boundary panels and cell rasterization.

Every grid produced here lives on one global lattice whose cell centers sit
at ``(k + 1/2) * h``.  Two rasterizations with the same spacing therefore
share cell centers, which is what lets masks be compared, intersected and
differenced by plain index arithmetic.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np
from scipy import ndimage

from .errors import DomainError, ResolutionError

__all__ = [
    "Disk",
    "Ball3",
    "HalfPlane",
    "Annulus",
    "GridDomain",
    "Circle",
    "Arc",
    "Segment",
    "Polyline",
    "FilledDisk",
    "PanelSet",
    "contains",
    "discretize_boundary",
    "rasterize_domain",
    "near_equality_proxy",
    "nearly_equal",
    "NEAR_EQUALITY_EPS",
]

NEAR_EQUALITY_EPS = 1e-3
_FOUR_NEIGHBORS = ndimage.generate_binary_structure(2, 1)


def _as_point(p, dim=None) -> np.ndarray:
    arr = np.asarray(p, dtype=float)
    if arr.ndim != 1 or arr.size not in (2, 3):
        raise DomainError(f"point must be a 2- or 3-vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DomainError("point coordinates must be finite")
    if dim is not None and arr.size != dim:
        raise DomainError(f"dimension mismatch: expected {dim}, got {arr.size}")
    return arr


def _as_points(pts, dim: int) -> np.ndarray:
    arr = np.asarray(pts, dtype=float)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.shape[-1] != dim:
        raise DomainError(f"dimension mismatch: expected {dim}, got {arr.shape[-1]}")
    return arr


def _tuple(p) -> tuple:
    return tuple(float(c) for c in np.asarray(p, dtype=float))


# ---------------------------------------------------------------------------
# Domains
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Disk:
    center: tuple
    radius: float
    dim: int = field(default=2, init=False)

    def __post_init__(self):
        object.__setattr__(self, "center", _tuple(_as_point(self.center, 2)))
        if not self.radius > 0:
            raise DomainError(f"disk radius must be positive, got {self.radius}")
        object.__setattr__(self, "radius", float(self.radius))

    def contains_many(self, pts) -> np.ndarray:
        d = _as_points(pts, 2) - self.center
        return np.einsum("ij,ij->i", d, d) < self.radius**2

    def bbox(self):
        cx, cy = self.center
        r = self.radius
        return (cx - r, cx + r, cy - r, cy + r)

    def min_feature(self) -> float:
        return self.radius


@dataclass(frozen=True)
class Ball3:
    center: tuple
    radius: float
    dim: int = field(default=3, init=False)

    def __post_init__(self):
        object.__setattr__(self, "center", _tuple(_as_point(self.center, 3)))
        if not self.radius > 0:
            raise DomainError(f"ball radius must be positive, got {self.radius}")
        object.__setattr__(self, "radius", float(self.radius))

    def contains_many(self, pts) -> np.ndarray:
        d = _as_points(pts, 3) - self.center
        return np.einsum("ij,ij->i", d, d) < self.radius**2

    def bbox(self):
        return None

    def min_feature(self) -> float:
        return self.radius


@dataclass(frozen=True)
class HalfPlane:
    """Open half-plane ``{x : (x - point) . normal > 0}``."""

    point: tuple
    normal: tuple
    dim: int = field(default=2, init=False)

    def __post_init__(self):
        object.__setattr__(self, "point", _tuple(_as_point(self.point, 2)))
        n = _as_point(self.normal, 2)
        norm = float(np.hypot(*n))
        if norm == 0.0:
            raise DomainError("half-plane normal must be nonzero")
        object.__setattr__(self, "normal", _tuple(n / norm))

    def contains_many(self, pts) -> np.ndarray:
        d = _as_points(pts, 2) - self.point
        return d @ np.asarray(self.normal) > 0

    def bbox(self):
        return None

    def min_feature(self) -> float:
        return math.inf


@dataclass(frozen=True)
class Annulus:
    center: tuple
    inner: float
    outer: float
    dim: int = field(default=2, init=False)

    def __post_init__(self):
        object.__setattr__(self, "center", _tuple(_as_point(self.center, 2)))
        if not self.inner > 0:
            raise DomainError(f"annulus inner radius must be positive, got {self.inner}")
        if not self.outer > self.inner:
            raise DomainError("annulus inner radius must be smaller than outer radius")
        object.__setattr__(self, "inner", float(self.inner))
        object.__setattr__(self, "outer", float(self.outer))

    def contains_many(self, pts) -> np.ndarray:
        d = _as_points(pts, 2) - self.center
        r2 = np.einsum("ij,ij->i", d, d)
        return (r2 > self.inner**2) & (r2 < self.outer**2)

    def bbox(self):
        cx, cy = self.center
        r = self.outer
        return (cx - r, cx + r, cy - r, cy + r)

    def min_feature(self) -> float:
        return min(self.inner, self.outer - self.inner)

    @property
    def area(self) -> float:
        return math.pi * (self.outer**2 - self.inner**2)


@dataclass(frozen=True, eq=False)
class GridDomain:
    """Cell mask on a uniform lattice.

    ``mask[i, j]`` describes the cell centered at
    ``origin + (i * h, j * h)``; the first index runs along x.
    """

    origin: tuple
    h: float
    mask: np.ndarray
    dim: int = field(default=2, init=False)

    def __post_init__(self):
        object.__setattr__(self, "origin", _tuple(_as_point(self.origin, 2)))
        if not self.h > 0:
            raise DomainError(f"grid spacing must be positive, got {self.h}")
        object.__setattr__(self, "h", float(self.h))
        mask = np.array(self.mask, dtype=bool)
        if mask.ndim != 2 or min(mask.shape) < 3:
            raise DomainError(f"grid mask must be 2D and at least 3x3, got {mask.shape}")
        if not mask.any():
            raise DomainError("grid domain has no interior cell")
        mask.setflags(write=False)
        object.__setattr__(self, "mask", mask)

    # lattice geometry -------------------------------------------------------

    @property
    def shape(self) -> tuple:
        return self.mask.shape

    @property
    def xs(self) -> np.ndarray:
        return self.origin[0] + self.h * np.arange(self.shape[0])

    @property
    def ys(self) -> np.ndarray:
        return self.origin[1] + self.h * np.arange(self.shape[1])

    @property
    def area(self) -> float:
        return float(self.mask.sum()) * self.h**2

    @property
    def key(self) -> str:
        digest = hashlib.sha1(np.packbits(self.mask).tobytes())
        digest.update(repr((self.shape, self.origin, self.h)).encode())
        return digest.hexdigest()

    def cell_centers(self, mask=None) -> np.ndarray:
        """Centers of the cells selected by ``mask`` (default: the domain)."""
        ii, jj = np.nonzero(self.mask if mask is None else mask)
        return np.column_stack([self.origin[0] + ii * self.h, self.origin[1] + jj * self.h])

    def cell_index(self, pts) -> tuple[np.ndarray, np.ndarray]:
        pts = _as_points(pts, 2)
        i = np.rint((pts[:, 0] - self.origin[0]) / self.h).astype(int)
        j = np.rint((pts[:, 1] - self.origin[1]) / self.h).astype(int)
        return i, j

    def contains_many(self, pts) -> np.ndarray:
        i, j = self.cell_index(pts)
        inside = (i >= 0) & (i < self.shape[0]) & (j >= 0) & (j < self.shape[1])
        out = np.zeros(i.shape, dtype=bool)
        out[inside] = self.mask[i[inside], j[inside]]
        return out

    def bbox(self):
        x, y = self.xs, self.ys
        half = self.h / 2
        return (x[0] - half, x[-1] + half, y[0] - half, y[-1] + half)

    def min_feature(self) -> float:
        return self.h

    # topology ---------------------------------------------------------------

    @property
    def is_connected(self) -> bool:
        _, count = ndimage.label(self.mask, structure=_FOUR_NEIGHBORS)
        return count == 1

    def boundary_adjacent(self) -> np.ndarray:
        """Masked cells with at least one unmasked 4-neighbor."""
        interior = ndimage.binary_erosion(self.mask, structure=_FOUR_NEIGHBORS, border_value=0)
        return self.mask & ~interior

    def ghost_mask(self) -> np.ndarray:
        """Unmasked cells with at least one masked 4-neighbor.

        Raises if the mask touches the array edge, since ghost cells would
        then fall outside the array.
        """
        m = self.mask
        if m[0, :].any() or m[-1, :].any() or m[:, 0].any() or m[:, -1].any():
            raise DomainError("grid mask touches the array edge; pad the lattice")
        grown = ndimage.binary_dilation(m, structure=_FOUR_NEIGHBORS)
        return grown & ~m

    def distance_to_exterior(self) -> np.ndarray:
        """Per-cell Euclidean distance (in length units) to the nearest unmasked center."""
        padded = np.pad(self.mask, 1, constant_values=False)
        dist = ndimage.distance_transform_edt(padded)[1:-1, 1:-1]
        return dist * self.h

    def inradius(self) -> float:
        return float(self.distance_to_exterior().max())

    def point_holes(self) -> np.ndarray:
        """Unmasked cells whose eight neighbors are all masked.

        At resolution ``h`` such a cell is the only trace of a point, or of
        a set too small to resolve, and points carry no capacity.
        """
        padded = np.pad(self.mask, 1, constant_values=False)
        count = ndimage.convolve(padded.astype(np.int8), np.ones((3, 3), np.int8), mode="constant")
        return (~padded & (count == 8))[1:-1, 1:-1]

    def without_point_holes(self) -> "GridDomain":
        holes = self.point_holes()
        return self.with_mask(self.mask | holes) if holes.any() else self

    def with_mask(self, mask) -> "GridDomain":
        return GridDomain(self.origin, self.h, mask)

    def remove_cells(self, pts) -> "GridDomain":
        """Copy of this grid with the cells containing ``pts`` unmasked."""
        mask = self.mask.copy()
        i, j = self.cell_index(pts)
        ok = (i >= 0) & (i < self.shape[0]) & (j >= 0) & (j < self.shape[1])
        mask[i[ok], j[ok]] = False
        return self.with_mask(mask)


Domain = Union[Disk, Ball3, HalfPlane, Annulus, GridDomain]


def contains(domain: Domain, p) -> bool:
    """True iff ``p`` lies strictly inside ``domain``."""
    p = _as_point(p, domain.dim)
    return bool(domain.contains_many(p[None, :])[0])


# ---------------------------------------------------------------------------
# Compact sets and panels
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Circle:
    center: tuple
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", _tuple(_as_point(self.center, 2)))
        if not self.radius > 0:
            raise DomainError(f"circle radius must be positive, got {self.radius}")
        object.__setattr__(self, "radius", float(self.radius))

    @property
    def length(self) -> float:
        return 2 * math.pi * self.radius


@dataclass(frozen=True)
class FilledDisk(Circle):
    """Closed disk; its equilibrium measure lives on the bounding circle."""


@dataclass(frozen=True)
class Arc:
    """Circular arc from angle ``start`` to ``stop`` (radians, counterclockwise)."""

    center: tuple
    radius: float
    start: float
    stop: float

    def __post_init__(self):
        object.__setattr__(self, "center", _tuple(_as_point(self.center, 2)))
        if not self.radius > 0:
            raise DomainError(f"arc radius must be positive, got {self.radius}")
        if not 0 < self.stop - self.start <= 2 * math.pi:
            raise DomainError("arc angle range must be in (0, 2*pi]")
        object.__setattr__(self, "radius", float(self.radius))

    @property
    def length(self) -> float:
        return self.radius * (self.stop - self.start)


@dataclass(frozen=True)
class Segment:
    start: tuple
    end: tuple

    def __post_init__(self):
        object.__setattr__(self, "start", _tuple(_as_point(self.start, 2)))
        object.__setattr__(self, "end", _tuple(_as_point(self.end, 2)))
        if self.length == 0:
            raise DomainError("segment has zero length")

    @property
    def length(self) -> float:
        return math.dist(self.start, self.end)


@dataclass(frozen=True)
class Polyline:
    vertices: tuple

    def __post_init__(self):
        verts = tuple(_tuple(_as_point(v, 2)) for v in self.vertices)
        if len(verts) < 2:
            raise DomainError("polyline needs at least two vertices")
        object.__setattr__(self, "vertices", verts)
        if any(math.dist(a, b) == 0 for a, b in zip(verts, verts[1:])):
            raise DomainError("polyline has a zero-length edge")

    @property
    def length(self) -> float:
        return sum(math.dist(a, b) for a, b in zip(self.vertices, self.vertices[1:]))


CompactSet = Union[Circle, FilledDisk, Arc, Segment, Polyline]


@dataclass(frozen=True, eq=False)
class PanelSet:
    """Boundary panels carrying quadrature data.

    ``lengths`` are carrier arclengths; ``starts``/``ends`` are the panel
    endpoints on the carrier and ``midpoints`` the carrier point halfway
    along each panel.  Interactions treat each panel as the straight chord.
    """

    midpoints: np.ndarray
    starts: np.ndarray
    ends: np.ndarray
    lengths: np.ndarray
    carrier: object = None

    def __post_init__(self):
        for name in ("midpoints", "starts", "ends", "lengths"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if len(self.lengths) and np.any(self.lengths <= 0):
            raise DomainError("panel lengths must be positive")

    @classmethod
    def empty(cls, dim: int = 2) -> "PanelSet":
        z = np.zeros((0, dim))
        return cls(z, z, z, np.zeros(0))

    def __len__(self) -> int:
        return len(self.lengths)

    @property
    def dim(self) -> int:
        return self.midpoints.shape[1]

    @property
    def total_length(self) -> float:
        return float(math.fsum(self.lengths))

    def points(self) -> np.ndarray:
        """Midpoints and endpoints stacked, for containment tests."""
        return np.vstack([self.midpoints, self.starts, self.ends])

    def bbox(self):
        pts = self.points()
        return (pts[:, 0].min(), pts[:, 0].max(), pts[:, 1].min(), pts[:, 1].max())


def _arc_panels(center, radius, theta0, theta1, count, carrier) -> PanelSet:
    t = np.linspace(theta0, theta1, count + 1)
    tm = 0.5 * (t[:-1] + t[1:])
    c = np.asarray(center)

    def on(theta):
        return c + radius * np.column_stack([np.cos(theta), np.sin(theta)])

    lengths = np.full(count, radius * (theta1 - theta0) / count)
    return PanelSet(on(tm), on(t[:-1]), on(t[1:]), lengths, carrier)


def _straight_panels(a, b, count):
    a, b = np.asarray(a), np.asarray(b)
    s = np.linspace(0.0, 1.0, count + 1)[:, None]
    pts = a + s * (b - a)
    return pts[:-1], pts[1:], np.full(count, math.dist(a, b) / count)


def discretize_boundary(compact: CompactSet, panel_count: int) -> PanelSet:
    """Split the 1D carrier of ``compact`` into near-equal arclength panels."""
    if panel_count < 4:
        raise DomainError(f"panel_count must be at least 4, got {panel_count}")
    if isinstance(compact, Circle):
        return _arc_panels(compact.center, compact.radius, 0.0, 2 * math.pi, panel_count, compact)
    if isinstance(compact, Arc):
        return _arc_panels(compact.center, compact.radius, compact.start, compact.stop,
                           panel_count, compact)
    if isinstance(compact, Segment):
        starts, ends, lengths = _straight_panels(compact.start, compact.end, panel_count)
        return PanelSet(0.5 * (starts + ends), starts, ends, lengths, compact)
    if isinstance(compact, Polyline):
        edges = list(zip(compact.vertices, compact.vertices[1:]))
        if panel_count < len(edges):
            raise DomainError("panel_count must be at least the number of polyline edges")
        edge_len = np.array([math.dist(a, b) for a, b in edges])
        # largest-remainder allocation, at least one panel per edge
        share = edge_len / edge_len.sum() * (panel_count - len(edges))
        counts = 1 + np.floor(share).astype(int)
        leftover = panel_count - counts.sum()
        counts[np.argsort(-(share - np.floor(share)))[:leftover]] += 1
        parts = [_straight_panels(a, b, k) for (a, b), k in zip(edges, counts)]
        starts = np.vstack([p[0] for p in parts])
        ends = np.vstack([p[1] for p in parts])
        lengths = np.concatenate([p[2] for p in parts])
        return PanelSet(0.5 * (starts + ends), starts, ends, lengths, compact)
    raise DomainError(f"unsupported compact set kind: {type(compact).__name__}")


# ---------------------------------------------------------------------------
# Rasterization
# ---------------------------------------------------------------------------


def _lattice(h: float, bbox, pad: int = 2):
    xmin, xmax, ymin, ymax = bbox
    i0 = math.floor(xmin / h - 0.5) - pad
    i1 = math.ceil(xmax / h - 0.5) + pad
    j0 = math.floor(ymin / h - 0.5) - pad
    j1 = math.ceil(ymax / h - 0.5) + pad
    origin = ((i0 + 0.5) * h, (j0 + 0.5) * h)
    return origin, (i1 - i0 + 1, j1 - j0 + 1)


def rasterize_domain(domain: Domain, h: float, bbox=None) -> GridDomain:
    """Mask the lattice cells of spacing ``h`` whose centers lie inside ``domain``.

    ``bbox`` is ``(xmin, xmax, ymin, ymax)``; it clips unbounded domains and
    otherwise defaults to the domain's own bounding box.  The mask is padded
    by two empty cells on every side.
    """
    if not h > 0:
        raise DomainError(f"grid spacing must be positive, got {h}")
    if domain.dim != 2:
        raise DomainError("rasterization is planar only")
    if isinstance(domain, GridDomain) and bbox is None and math.isclose(domain.h, h):
        return domain
    own = domain.bbox()
    if own is None and bbox is None:
        raise DomainError("clip required: unbounded domain needs a bounding box")
    if bbox is None:
        bbox = own
    feature = domain.min_feature()
    if not math.isfinite(feature):
        feature = min(bbox[1] - bbox[0], bbox[3] - bbox[2])
    if h >= feature / 8 and not isinstance(domain, GridDomain):
        raise ResolutionError(
            f"grid spacing {h} is not below 1/8 of the minimum feature size {feature}")
    origin, shape = _lattice(h, bbox)
    xs = origin[0] + h * np.arange(shape[0])
    ys = origin[1] + h * np.arange(shape[1])
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    pts = np.column_stack([X.ravel(), Y.ravel()])
    inside = domain.contains_many(pts).reshape(shape)
    inside &= (X > bbox[0]) & (X < bbox[1]) & (Y > bbox[2]) & (Y < bbox[3])
    if not inside.any():
        raise DomainError("rasterization produced an empty mask")
    grid = GridDomain(origin, h, inside)
    if not grid.is_connected:
        raise DomainError("rasterized domain is not 4-connected; refine h")
    return grid


def _on_common_lattice(a: GridDomain, b: GridDomain):
    """Return both masks on one lattice covering both grids (spacing of ``a``)."""
    h = a.h
    offset = (np.asarray(b.origin) - np.asarray(a.origin)) / h
    aligned = math.isclose(a.h, b.h, rel_tol=1e-9) and np.allclose(offset, np.rint(offset), atol=1e-6)
    if not aligned:
        # resample b by nearest-cell lookup on a lattice through a's centers
        xmin, xmax, ymin, ymax = b.bbox()
        i0 = math.floor((xmin - a.origin[0]) / h)
        j0 = math.floor((ymin - a.origin[1]) / h)
        ni = math.ceil((xmax - a.origin[0]) / h) - i0 + 1
        nj = math.ceil((ymax - a.origin[1]) / h) - j0 + 1
        origin = (a.origin[0] + i0 * h, a.origin[1] + j0 * h)
        X, Y = np.meshgrid(origin[0] + h * np.arange(ni), origin[1] + h * np.arange(nj), indexing="ij")
        bm = b.contains_many(np.column_stack([X.ravel(), Y.ravel()])).reshape(ni, nj)
        b_off = (i0, j0)
    else:
        bm = b.mask
        b_off = tuple(int(v) for v in np.rint(offset))
    lo = (min(0, b_off[0]), min(0, b_off[1]))
    hi = (max(a.shape[0], b_off[0] + bm.shape[0]), max(a.shape[1], b_off[1] + bm.shape[1]))
    shape = (hi[0] - lo[0], hi[1] - lo[1])
    ma = np.zeros(shape, dtype=bool)
    mb = np.zeros(shape, dtype=bool)
    ma[-lo[0]:-lo[0] + a.shape[0], -lo[1]:-lo[1] + a.shape[1]] = a.mask
    bi, bj = b_off[0] - lo[0], b_off[1] - lo[1]
    mb[bi:bi + bm.shape[0], bj:bj + bm.shape[1]] = bm
    origin = (a.origin[0] + lo[0] * h, a.origin[1] + lo[1] * h)
    return origin, h, ma, mb


def near_equality_proxy(a: GridDomain, b: GridDomain) -> tuple[float, float]:
    """Symmetric-difference area and its Green capacity in a large reference disk.

    Exact nearly-everywhere equality cannot be decided on a grid; the
    capacity of the cells in exactly one mask stands in for it.
    """
    from .equilibrium import cell_set_capacity

    origin, h, ma, mb = _on_common_lattice(a, b)
    sym = ma ^ mb
    area = float(sym.sum()) * h**2
    if not sym.any():
        return 0.0, 0.0
    # reference disk from the union's extent, so the result is symmetric in (a, b)
    union = ma | mb
    ii, jj = np.nonzero(union)
    lo = np.array([ii.min(), jj.min()]) * h + origin
    hi = np.array([ii.max(), jj.max()]) * h + origin
    center = 0.5 * (lo + hi)
    radius = 2.0 * float(np.hypot(*(hi - lo))) + 4 * h
    cap = cell_set_capacity(sym, origin, h, Disk(tuple(center), radius))
    return area, cap


def nearly_equal(a: GridDomain, b: GridDomain, eps: float = NEAR_EQUALITY_EPS) -> bool:
    return near_equality_proxy(a, b)[1] < eps
