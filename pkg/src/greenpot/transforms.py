"""Sphere inversion, reflection, and the Green-function identities they induce."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .geometry import Annulus, Ball3, Disk, GridDomain, HalfPlane, _as_point, _lattice, rasterize_domain
from .kernel import make_evaluator

__all__ = [
    "InversionSpec",
    "invert_point",
    "invert_points",
    "invert_domain",
    "reflect_point",
    "green_inversion_identity_check",
    "same_domain",
]


@dataclass(frozen=True)
class InversionSpec:
    center: tuple
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in _as_point(self.center)))
        if not self.radius > 0:
            raise DomainError(f"inversion radius must be positive, got {self.radius}")
        object.__setattr__(self, "radius", float(self.radius))

    @property
    def dim(self) -> int:
        return len(self.center)


def invert_points(X, inv: InversionSpec) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    c = np.asarray(inv.center)
    if X.shape[1] != len(c):
        raise DomainError("dimension mismatch between points and inversion sphere")
    d = X - c
    r2 = np.einsum("ij,ij->i", d, d)
    if np.any(r2 == 0):
        raise DomainError("cannot invert the inversion center")
    return c + inv.radius**2 * d / r2[:, None]


def invert_point(x, inv: InversionSpec) -> np.ndarray:
    return invert_points(np.asarray(x, dtype=float)[None], inv)[0]


def reflect_point(x, point, normal) -> np.ndarray:
    """Mirror image of ``x`` across the line/hyperplane through ``point`` with ``normal``."""
    x = np.asarray(x, dtype=float)
    n = np.asarray(normal, dtype=float)
    n = n / np.linalg.norm(n)
    return x - 2 * ((x - np.asarray(point, dtype=float)) @ n) * n


def _inverse_ball(center, radius, inv: InversionSpec):
    """Image of the open ball ``B(center, radius)`` when the inversion center is outside it."""
    c = np.asarray(center)
    x0 = np.asarray(inv.center)
    d = float(np.linalg.norm(c - x0))
    if d <= radius:
        raise DomainError("unbounded inverse; supply clip box")
    k = inv.radius**2 / (d * d - radius * radius)
    return tuple(x0 + k * (c - x0)), k * radius


def invert_domain(spec, inv: InversionSpec, h: float | None = None):
    """Image of ``spec`` under inversion in the sphere ``S(inv.center, inv.radius)``.

    Disks/balls avoiding the center and annuli centered at it have closed
    forms; any other planar domain is rasterized (spacing ``h``) by pulling
    each candidate cell center back through the inversion.
    """
    x0 = np.asarray(inv.center)
    if isinstance(spec, Annulus) and np.allclose(spec.center, x0, rtol=0, atol=1e-14):
        r2 = inv.radius**2
        return Annulus(spec.center, r2 / spec.outer, r2 / spec.inner)
    if isinstance(spec, Disk):
        center, radius = _inverse_ball(spec.center, spec.radius, inv)
        return Disk(center, radius)
    if isinstance(spec, Ball3):
        center, radius = _inverse_ball(spec.center, spec.radius, inv)
        return Ball3(center, radius)
    if isinstance(spec, HalfPlane):
        raise DomainError("unbounded inverse; supply clip box")
    if spec.dim != 2:
        raise DomainError("only planar domains can be inverted on a grid")
    if h is None:
        raise DomainError("grid spacing required to invert a non-model domain")
    grid = spec if isinstance(spec, GridDomain) else rasterize_domain(spec, h)
    cells = grid.cell_centers()
    dist = np.hypot(*(cells - x0).T)
    near = float(dist.min()) - grid.h
    if grid.contains_many(x0[None])[0] or near <= 0:
        raise DomainError("unbounded inverse; supply clip box")
    far = float(dist.max()) + grid.h
    reach = inv.radius**2 / near
    origin, shape = _lattice(h, (x0[0] - reach, x0[0] + reach, x0[1] - reach, x0[1] + reach))
    X, Y = np.meshgrid(origin[0] + h * np.arange(shape[0]), origin[1] + h * np.arange(shape[1]),
                       indexing="ij")
    pts = np.column_stack([X.ravel(), Y.ravel()])
    r = np.hypot(*(pts - x0).T)
    mask = np.zeros(len(pts), dtype=bool)
    cand = (r > inv.radius**2 / far) & (r < reach)
    mask[cand] = spec.contains_many(invert_points(pts[cand], inv))
    if not mask.any():
        raise DomainError("inverse domain is empty at this resolution")
    return GridDomain(origin, h, mask.reshape(shape))


def same_domain(a, b, rel: float = 1e-12) -> bool:
    """Structural equality of model domains, up to rounding."""
    if type(a) is not type(b):
        return False
    if isinstance(a, GridDomain):
        return a.shape == b.shape and np.allclose(a.origin, b.origin) and bool(np.all(a.mask == b.mask))
    for name in a.__dataclass_fields__:
        va, vb = getattr(a, name), getattr(b, name)
        if not np.allclose(np.asarray(va, dtype=float), np.asarray(vb, dtype=float), rtol=rel, atol=rel):
            return False
    return True


def green_inversion_identity_check(D, inv: InversionSpec, samples, n: int = 2, h: float | None = None,
                                   mode: str = "auto", evaluators: tuple | None = None) -> float:
    """Largest relative gap between ``G_{D*}(x, y)`` and the transformed ``G_D(x*, y*)``.

    ``samples`` is a sequence of ``(x, y)`` pairs in ``D*``.  The prefactor
    ``(r^2 / (|x - x0| |y - x0|))^(n-2)`` is exactly 1 in the plane.
    """
    if evaluators is None:
        D_star = invert_domain(D, inv, h)
        evaluators = (make_evaluator(D, h, mode), make_evaluator(D_star, h, mode))
    ev_D, ev_star = evaluators
    pairs = np.asarray(samples, dtype=float)
    if pairs.ndim != 3 or pairs.shape[1] != 2 or pairs.shape[2] != n:
        raise DomainError(f"samples must be a list of ({n}-vector, {n}-vector) pairs")
    X, Y = pairs[:, 0], pairs[:, 1]
    for pts in (X, Y):
        if not np.all(ev_star.contains(pts)):
            raise DomainError("sample point outside the inverse domain")
    Xs, Ys = invert_points(X, inv), invert_points(Y, inv)
    for pts in (Xs, Ys):
        if not np.all(ev_D.contains(pts)):
            raise DomainError("inverted sample point outside the domain")
    c = np.asarray(inv.center)
    worst = 0.0
    for x, y, xs, ys in zip(X, Y, Xs, Ys):
        lhs = ev_star(x, y)
        pref = (inv.radius**2 / (np.linalg.norm(x - c) * np.linalg.norm(y - c))) ** (n - 2)
        rhs = pref * ev_D(xs, ys)
        worst = max(worst, abs(lhs - rhs) / max(abs(lhs), 1e-6))
    return worst

