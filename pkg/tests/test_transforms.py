from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from greenpot.errors import DomainError
from greenpot.geometry import Annulus, Ball3, Disk, GridDomain, HalfPlane, rasterize_domain
from greenpot.transforms import (InversionSpec, green_inversion_identity_check, invert_domain, invert_point,
                                 invert_points, reflect_point, same_domain)

UNIT = InversionSpec((0, 0), 1.0)
coord = st.floats(-5, 5, allow_nan=False).filter(lambda v: abs(v) > 1e-3)


def test_invert_point_example():
    assert np.allclose(invert_point((2, 0), UNIT), (0.5, 0))


def test_sphere_points_fixed():
    t = np.linspace(0, 2 * np.pi, 17)
    P = np.column_stack([np.cos(t), np.sin(t)])
    assert np.allclose(invert_points(P, UNIT), P)


@given(coord, coord, st.floats(0.1, 3))
def test_inversion_is_involution(x, y, r):
    inv = InversionSpec((0.3, -0.2), r)
    p = np.array([x, y])
    if np.allclose(p, inv.center):
        return
    assert np.allclose(invert_point(invert_point(p, inv), inv), p, rtol=1e-9, atol=1e-9)


def test_center_cannot_be_inverted():
    with pytest.raises(DomainError):
        invert_point((0, 0), UNIT)


def test_annulus_image():
    img = invert_domain(Annulus((0, 0), 0.5, 3), UNIT)
    assert img.inner == pytest.approx(1 / 3) and img.outer == pytest.approx(2)
    assert same_domain(invert_domain(Annulus((0, 0), 0.5, 2), UNIT), Annulus((0, 0), 0.5, 2))


def test_disk_through_center_is_unbounded():
    with pytest.raises(DomainError, match="unbounded inverse"):
        invert_domain(Disk((0, 0), 2), UNIT)
    with pytest.raises(DomainError, match="unbounded inverse"):
        invert_domain(HalfPlane((0, 0), (0, 1)), UNIT)


def test_disk_image_matches_pointwise():
    D = Disk((3, 0), 1)
    img = invert_domain(D, UNIT)
    # the diameter endpoints 2 and 4 go to 1/2 and 1/4
    assert img.center[0] == pytest.approx(0.375) and img.radius == pytest.approx(0.125)
    ball = invert_domain(Ball3((0, 0, 3), 1), InversionSpec((0, 0, 0), 1))
    assert ball.radius == pytest.approx(0.125)


def test_grid_inversion_matches_closed_form():
    D = Disk((3, 0), 1)
    grid = invert_domain(rasterize_domain(D, 0.01), UNIT, h=0.005)
    assert isinstance(grid, GridDomain)
    exact = invert_domain(D, UNIT)
    assert grid.area == pytest.approx(np.pi * exact.radius**2, rel=0.05)


def test_reflect_examples():
    assert np.allclose(reflect_point((1, 2), (0, 0), (0, 1)), (1, -2))
    assert np.allclose(reflect_point((0, 0), (1, 1), (1, 1)), (2, 2))


@given(coord, coord)
def test_reflection_is_involution(x, y):
    p = np.array([x, y])
    q = reflect_point(reflect_point(p, (0.5, 0.1), (1, 2)), (0.5, 0.1), (1, 2))
    assert np.allclose(q, p, atol=1e-9)


def test_identity_closed_forms():
    # D = disk outside the unit circle, D* a disk inside it
    D = Disk((3, 0), 1)
    star_samples = [((0.35, 0.05), (0.4, -0.03)), ((0.3, 0.0), (0.42, 0.02))]
    assert green_inversion_identity_check(D, UNIT, star_samples) < 1e-10
    # three dimensions: the prefactor is no longer 1
    B = Ball3((0, 0, 4), 1)
    inv3 = InversionSpec((0, 0, 0), 2)
    img = invert_domain(B, inv3)
    c = np.asarray(img.center)
    pairs = [(c + (0.05, 0, 0), c - (0, 0.05, 0.02)), (c + (0, 0, 0.1), c - (0.02, 0, 0.08))]
    assert green_inversion_identity_check(B, inv3, pairs, n=3) < 1e-10


def test_identity_annulus_numeric():
    A = Annulus((0, 0), 0.5, 3)
    pairs = [((0.6, 0.0), (0.0, -0.9)), ((1.2, 0.3), (-0.7, 0.7))]
    assert green_inversion_identity_check(A, UNIT, pairs, h=0.01) < 0.02


def test_identity_rejects_bad_samples():
    with pytest.raises(DomainError):
        green_inversion_identity_check(Disk((3, 0), 1), UNIT, [((5, 5), (0.35, 0))])
