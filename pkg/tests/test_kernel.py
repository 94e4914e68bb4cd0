from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from greenpot.dirichlet import interpolate
from greenpot.errors import DomainError
from greenpot.geometry import Annulus, Ball3, Disk, HalfPlane, rasterize_domain
from greenpot.kernel import (Ball3Green, DiskGreen, GridGreen, HalfPlaneGreen, KernelConstant,
                             cell_mean_log_kernel, green_ball3, green_disk, green_halfplane,
                             green_numeric, kernel, make_evaluator)


def test_kernel_values():
    assert kernel((0, 0), (1, 0), 2) == 0.0
    assert kernel((0, 0, 0), (0, 2, 0), 3) == pytest.approx(0.5, abs=1e-15)
    assert kernel((0.3, 0.1), (0.3, 0.1), 2) == math.inf


def test_kernel_constants():
    assert KernelConstant.for_dimension(2).kappa == 2 * math.pi
    assert KernelConstant.for_dimension(2).sigma == 2 * math.pi
    assert KernelConstant.for_dimension(3).sigma == 4 * math.pi
    assert KernelConstant.for_dimension(3).kappa == 4 * math.pi


def test_cell_mean_log_kernel_matches_quadrature():
    # midpoint rule on a fine sub-grid of the square, avoiding the singular center exactly
    h, m = 0.3, 2000
    s = (np.arange(m) + 0.5) / m - 0.5
    X, Y = np.meshgrid(s * h, s * h)
    approx = float(np.mean(-0.5 * np.log(X**2 + Y**2)))
    assert cell_mean_log_kernel(h) == pytest.approx(approx, abs=1e-5)


def test_green_disk_center_source():
    assert green_disk((0, 0), 1, (0.5, 0), (0, 0)) == pytest.approx(math.log(2), abs=1e-15)


def test_green_disk_vanishes_at_boundary():
    for t in (1 - 1e-6, 1 - 1e-9):
        assert abs(green_disk((0, 0), 1, (t, 0), (0.2, 0.3))) < 1e-5


def test_green_disk_symmetry_example():
    x, y = (0.3, 0.1), (-0.2, 0.4)
    assert abs(green_disk((0, 0), 1, x, y) - green_disk((0, 0), 1, y, x)) < 1e-12


def test_green_disk_outside_rejected():
    with pytest.raises(DomainError):
        green_disk((0, 0), 1, (1.5, 0), (0, 0))


def test_green_halfplane_example():
    assert green_halfplane((0, 0), (0, 1), (0, 1), (0, 2)) == pytest.approx(math.log(3), abs=1e-14)
    assert abs(green_halfplane((0, 0), (0, 1), (0.4, 1e-9), (0, 2))) < 1e-8
    with pytest.raises(DomainError):
        green_halfplane((0, 0), (0, 1), (0, -1), (0, 2))


def test_green_ball3_examples():
    assert green_ball3((0, 0, 0), 1, (0.5, 0, 0), (0, 0, 0)) == pytest.approx(1.0, abs=1e-14)
    assert abs(green_ball3((0, 0, 0), 1, (1 - 1e-9, 0, 0), (0, 0, 0))) < 1e-8
    assert abs(green_ball3((0, 0, 0), 1, (0, 1 - 1e-9, 0), (0.1, 0.2, 0.3))) < 1e-7
    with pytest.raises(DomainError):
        green_ball3((0, 0, 0), 1, (2, 0, 0), (0, 0, 0))


def _disk_pairs(r, count, seed):
    rng = np.random.default_rng(seed)
    rad = r * np.sqrt(rng.uniform(0, 0.98, (count, 2)))
    ang = rng.uniform(0, 2 * np.pi, (count, 2))
    X = np.column_stack([rad[:, 0] * np.cos(ang[:, 0]), rad[:, 0] * np.sin(ang[:, 0])])
    Y = np.column_stack([rad[:, 1] * np.cos(ang[:, 1]), rad[:, 1] * np.sin(ang[:, 1])])
    return X, Y


@pytest.mark.parametrize("evaluator, sampler", [
    (DiskGreen(Disk((0.2, -0.1), 1.5)), lambda: _disk_pairs(1.5, 100, 1)),
    (HalfPlaneGreen(HalfPlane((0, 1), (1, 1))), None),
    (Ball3Green(Ball3((0, 0, 0), 2)), None),
])
def test_closed_form_symmetry_and_positivity(evaluator, sampler):
    rng = np.random.default_rng(7)
    if sampler is not None:
        X, Y = sampler()
        X, Y = X + (0.2, -0.1), Y + (0.2, -0.1)
    elif evaluator.dim == 2:
        P = rng.uniform(-3, 3, (400, 2))
        P = P[evaluator.contains(P)][:200]
        X, Y = P[:100], P[100:200]
    else:
        P = rng.uniform(-1.1, 1.1, (200, 3))
        X, Y = P[:100], P[100:]
    G = np.array([evaluator(x, y) for x, y in zip(X, Y)])
    Gt = np.array([evaluator(y, x) for x, y in zip(X, Y)])
    assert np.all(np.abs(G - Gt) / np.maximum(G, 1e-6) < 1e-12)
    assert np.all(G > -1e-9)


@given(st.floats(0.05, 0.95), st.floats(0, 2 * math.pi), st.floats(0.0, 0.95), st.floats(0, 2 * math.pi))
def test_disk_domain_monotonicity(r1, a1, r2, a2):
    x = (r1 * math.cos(a1), r1 * math.sin(a1))
    y = (r2 * math.cos(a2), r2 * math.sin(a2))
    if math.dist(x, y) < 1e-6:
        return
    assert green_disk((0, 0), 1, x, y) <= green_disk((0, 0), 2, x, y) + 1e-12


def test_corrections_finite_on_diagonal():
    for ev, pts in ((DiskGreen(Disk((0, 0), 1)), np.array([[0.1, 0.2], [0.0, 0.0]])),
                    (HalfPlaneGreen(HalfPlane((0, 0), (0, 1))), np.array([[0.1, 0.2], [3.0, 1.0]])),
                    (Ball3Green(Ball3((0, 0, 0), 1)), np.array([[0.1, 0.2, 0.3], [0.0, 0.0, 0.0]]))):
        H = np.diag(ev.correction(pts, pts))
        assert np.all(np.isfinite(H))


@pytest.fixture(scope="module")
def disk_grid_green():
    return GridGreen(rasterize_domain(Disk((0, 0), 1), 0.005))


def test_green_numeric_matches_closed_form(disk_grid_green):
    field = disk_grid_green.green_field((0.0025, 0.0025))
    value = interpolate(field, (0.5025, 0.0025))
    exact = green_disk((0, 0), 1, (0.5025, 0.0025), (0.0025, 0.0025))
    assert abs(value - exact) < 0.01 * exact


def test_green_numeric_small_at_boundary(disk_grid_green):
    y = (0.0025, 0.0025)
    field = disk_grid_green.green_field(y)
    grid = field.grid
    edge = np.abs(field.values[grid.boundary_adjacent()])
    # |grad G| <= 1/|x - y| is at most about 1 near the unit circle
    assert edge.max() < 5 * grid.h * 1.0 + 1e-12
    assert np.nanmin(field.values) > -1e-9


def test_green_numeric_function(unit_disk):
    grid = rasterize_domain(unit_disk, 0.02)
    field = green_numeric(grid, (0.01, 0.01))
    assert interpolate(field, (0.51, 0.01)) == pytest.approx(math.log(2), rel=0.02)


def test_green_numeric_symmetry_on_annulus():
    ev = GridGreen(rasterize_domain(Annulus((0, 0), 0.5, 3), 0.02))
    rng = np.random.default_rng(3)
    r = rng.uniform(0.7, 2.6, (10, 2))
    t = rng.uniform(0, 2 * np.pi, (10, 2))
    X = np.column_stack([r[:, 0] * np.cos(t[:, 0]), r[:, 0] * np.sin(t[:, 0])])
    Y = np.column_stack([r[:, 1] * np.cos(t[:, 1]), r[:, 1] * np.sin(t[:, 1])])
    for x, y in zip(X, Y):
        a, b = ev(x, y), ev(y, x)
        assert abs(a - b) < 0.02 * max(a, b)
        assert a > 0


def test_grid_sources_near_boundary_rejected(unit_disk):
    ev = GridGreen(rasterize_domain(unit_disk, 0.02))
    with pytest.raises(DomainError):
        ev.check_sources(np.array([[0.975, 0.0]]))
    with pytest.raises(DomainError):
        ev.check_sources(np.array([[2.0, 0.0]]))


def test_grid_green_fills_point_holes(unit_disk):
    grid = rasterize_domain(unit_disk, 0.02)
    holed = grid.remove_cells([(0.51, 0.01)])
    ev = GridGreen(holed)
    assert ev.grid.mask.sum() == grid.mask.sum()
    assert not ev.contains(np.array([[0.51, 0.01]]))[0]


def test_make_evaluator_dispatch(unit_disk):
    assert isinstance(make_evaluator(unit_disk), DiskGreen)
    assert isinstance(make_evaluator(HalfPlane((0, 0), (0, 1))), HalfPlaneGreen)
    assert isinstance(make_evaluator(Ball3((0, 0, 0), 1)), Ball3Green)
    assert isinstance(make_evaluator(unit_disk, 0.05, mode="grid"), GridGreen)
    assert isinstance(make_evaluator(Annulus((0, 0), 0.5, 1.5), 0.05), GridGreen)
    with pytest.raises(DomainError):
        make_evaluator(Annulus((0, 0), 0.5, 1.5))
    with pytest.raises(ValueError):
        make_evaluator(unit_disk, mode="series")
