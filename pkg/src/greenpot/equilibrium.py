"""Discrete Green energy, its minimization over the simplex, and checks on the result."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dirichlet import GridField
from .errors import ConvergenceError, DomainError, SolverError
from .geometry import Disk, GridDomain, PanelSet
from .kernel import DiskGreen, GreenEvaluator, GridGreen, KernelConstant, kernel_matrix

__all__ = [
    "EnergyMatrix",
    "DiscreteMeasure",
    "EquilibriumResult",
    "EquilibriumReport",
    "panel_self_energy",
    "assemble",
    "project_simplex",
    "solve_equilibrium",
    "capacity",
    "potential",
    "potential_at",
    "potential_field",
    "verify_equilibrium",
    "flux_check",
    "measure_deviation",
    "cell_set_capacity",
    "concentric_sphere_energy",
    "SQUARE_SELF_ENERGY",
    "DomainSolution",
]

SELF_ENERGY_OFFSET = 1.5
PSD_CHECK_LIMIT = 512
# mean of log(1/|x - y|) for x, y uniform in the unit square
SQUARE_SELF_ENERGY = 25 / 12 - math.pi / 3 - math.log(2) / 3


def panel_self_energy(length):
    """Log energy of the uniform unit mass on a straight panel of this length."""
    return np.log(1.0 / np.asarray(length, dtype=float)) + SELF_ENERGY_OFFSET


@dataclass(frozen=True, eq=False)
class EnergyMatrix:
    entries: np.ndarray
    panels: PanelSet | None = None
    evaluator: GreenEvaluator | None = None
    min_eigenvalue: float | None = field(default=None, init=False)

    def __post_init__(self):
        M = np.array(self.entries, dtype=float)
        if M.ndim != 2 or M.shape[0] != M.shape[1] or M.shape[0] == 0:
            raise SolverError("energy matrix must be square and nonempty")
        if not np.all(np.isfinite(M)):
            raise SolverError("energy matrix has non-finite entries")
        if np.max(np.abs(M - M.T)) > 1e-12 * max(1.0, np.max(np.abs(M))):
            raise SolverError("energy matrix is not symmetric")
        M.setflags(write=False)
        object.__setattr__(self, "entries", M)
        if len(M) <= PSD_CHECK_LIMIT:
            lam = float(np.linalg.eigvalsh(M)[0])
            object.__setattr__(self, "min_eigenvalue", lam)
            if lam < -1e-8 * abs(np.trace(M)):
                raise SolverError(f"energy matrix is not positive semidefinite (min eigenvalue {lam:.3e})")

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def trace(self) -> float:
        return float(np.trace(self.entries))

    @property
    def degenerate(self) -> bool:
        return self.min_eigenvalue is not None and self.min_eigenvalue < 1e-10 * abs(self.trace)

    def scaled(self, c: float) -> "EnergyMatrix":
        return EnergyMatrix(c * self.entries, self.panels, self.evaluator)


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    weights: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        if np.any(w < 0):
            raise DomainError("measure weights must be nonnegative")
        if abs(w.sum() - 1.0) > 1e-10:
            raise DomainError(f"measure must have unit mass, got {w.sum()!r}")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    def __len__(self) -> int:
        return len(self.weights)


@dataclass(frozen=True, eq=False)
class EquilibriumResult:
    measure: DiscreteMeasure
    energy: float
    kkt_gap: float
    iterations: int
    degenerate: bool = False
    matrix: EnergyMatrix | None = field(default=None, repr=False)

    @property
    def capacity(self) -> float:
        return capacity(self.energy)

    @property
    def weights(self) -> np.ndarray:
        return self.measure.weights


def capacity(energy: float) -> float:
    if not energy > 0:
        raise DomainError(f"capacity needs a positive energy, got {energy}")
    return 1.0 / energy


def assemble(panels: PanelSet, evaluator: GreenEvaluator) -> EnergyMatrix:
    """Green interactions between panels: midpoint collocation off the diagonal,
    exact straight-panel self-energy plus ``H`` on it."""
    if panels.dim != 2 or evaluator.dim != 2:
        raise DomainError("unsupported: panel self-energy is only available in the plane")
    mids = panels.midpoints
    if not np.all(evaluator.contains(mids)):
        raise DomainError("panel midpoint outside the evaluator's domain")
    H = evaluator.correction(mids, mids)
    H = 0.5 * (H + H.T)
    M = kernel_matrix(mids, mids, 2)
    np.fill_diagonal(M, panel_self_energy(panels.lengths))
    M += H
    return EnergyMatrix(M, panels, evaluator)


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto ``{w >= 0, sum(w) = 1}`` (sort-based)."""
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    k = np.arange(1, len(v) + 1)
    rho = np.nonzero(u - css / k > 0)[0][-1]
    return np.maximum(v - css[rho] / (rho + 1), 0.0)


def _kkt_gap(Mw: np.ndarray, w: np.ndarray, energy: float) -> float:
    active = w > 0
    gap = np.max(np.abs(Mw[active] - energy)) if active.any() else 0.0
    if (~active).any():
        gap = max(gap, float(np.max(np.maximum(0.0, energy - Mw[~active]))))
    return float(gap)


def _polish(M: np.ndarray, w: np.ndarray):
    """Solve the equality-constrained problem on the current support.

    Returns the polished weights, or ``None`` when the support is not
    a valid optimal face.
    """
    support = w > 1e-12 * w.max()
    for _ in range(8):
        idx = np.nonzero(support)[0]
        if len(idx) == 0:
            return None
        try:
            z = np.linalg.solve(M[np.ix_(idx, idx)], np.ones(len(idx)))
        except np.linalg.LinAlgError:
            return None
        total = z.sum()
        if not total > 0:
            return None
        v = z / total
        if np.all(v >= 0):
            out = np.zeros_like(w)
            out[idx] = v
            return out
        support[idx[v < 0]] = False
    return None


def solve_equilibrium(matrix, tolerance: float | None = None, max_iterations: int = 100_000,
                      initial=None) -> EquilibriumResult:
    """Minimize ``w^T M w`` over the probability simplex.

    Spectral projected gradient (Barzilai-Borwein steps, nonmonotone
    backtracking) with an active-face polish; stops once the KKT gap is
    at most ``tolerance`` (default ``1e-8 * trace(M) / size``).
    """
    if not isinstance(matrix, EnergyMatrix):
        matrix = EnergyMatrix(matrix)
    M = matrix.entries
    n = len(M)
    if tolerance is None:
        tolerance = 1e-8 * abs(matrix.trace) / n
    w = np.full(n, 1.0 / n) if initial is None else project_simplex(np.asarray(initial, dtype=float))

    Mw = M @ w
    f = float(w @ Mw)
    history = [f]
    best = (_kkt_gap(Mw, w, f), w.copy())
    step = 1.0 / max(np.max(np.abs(M)), 1e-300)
    step_max = 1e12 * step

    for it in range(1, max_iterations + 1):
        gap = _kkt_gap(Mw, w, f)
        if gap < best[0]:
            best = (gap, w.copy())
        if gap <= tolerance:
            return _result(matrix, w, Mw, gap, it - 1)
        if it % 10 == 0:
            v = _polish(M, w)
            if v is not None:
                Mv = M @ v
                fv = float(v @ Mv)
                gv = _kkt_gap(Mv, v, fv)
                if gv <= tolerance:
                    return _result(matrix, v, Mv, gv, it)

        g = 2.0 * Mw
        d = project_simplex(w - step * g) - w
        gd = float(g @ d)
        if gd >= 0:
            # stationary in floating point; only the polish can improve further
            v = _polish(M, w)
            if v is not None:
                Mv = M @ v
                fv = float(v @ Mv)
                return _result(matrix, v, Mv, _kkt_gap(Mv, v, fv), it)
            break
        Md = M @ d
        dMd = float(d @ Md)
        f_ref = max(history[-10:])
        lam = 1.0
        while True:
            f_new = f + lam * gd + lam * lam * dMd
            if f_new <= f_ref + 1e-4 * lam * gd or lam < 1e-12:
                break
            # safeguarded minimizer of the quadratic along d
            lam = min(0.5 * lam, max(0.1 * lam, -gd / (2 * dMd))) if dMd > 0 else 0.5 * lam
        s = lam * d
        Ms = lam * Md
        w = w + s
        w[w < 0] = 0.0
        Mw = Mw + Ms
        f = float(w @ Mw)
        history.append(f)
        sy = float(s @ (2 * Ms))
        step = min(step_max, float(s @ s) / sy) if sy > 0 else step_max

    raise ConvergenceError(
        f"simplex solver did not reach KKT gap {tolerance:.3e} in {max_iterations} iterations "
        f"(best gap {best[0]:.3e})", weights=best[1], gap=best[0], iterations=max_iterations)


def _result(matrix: EnergyMatrix, w, Mw, gap, iterations) -> EquilibriumResult:
    w = np.maximum(w, 0.0)
    w = w / w.sum()
    energy = float(w @ matrix.entries @ w)
    return EquilibriumResult(DiscreteMeasure(w), energy, float(gap), int(iterations),
                             matrix.degenerate, matrix)


# ---------------------------------------------------------------------------
# Potentials
# ---------------------------------------------------------------------------


def _regularized_kernel(X, panels: PanelSet) -> np.ndarray:
    K = kernel_matrix(X, panels.midpoints, 2)
    d2 = np.zeros_like(K)
    for k in range(2):
        d2 += (X[:, k, None] - panels.midpoints[None, :, k]) ** 2
    near = d2 < (0.5 * panels.lengths[None, :]) ** 2
    if near.any():
        K = np.where(near, panel_self_energy(panels.lengths)[None, :], K)
    return K


def _weights(measure) -> np.ndarray:
    return np.asarray(measure.weights if isinstance(measure, DiscreteMeasure) else measure, dtype=float)


def potential_at(measure, panels: PanelSet, evaluator: GreenEvaluator, X) -> np.ndarray:
    """Green potential of the panel measure at each row of ``X``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if not np.all(evaluator.contains(X)):
        raise DomainError("potential evaluation point outside the domain")
    w = _weights(measure)
    out = np.empty(len(X))
    step = max(1, int(4_000_000 // len(panels)))
    for s in range(0, len(X), step):
        out[s:s + step] = _regularized_kernel(X[s:s + step], panels) @ w
    return out + evaluator.correction_sum(X, panels.midpoints, w)


def potential(measure, panels: PanelSet, evaluator: GreenEvaluator, x) -> float:
    return float(potential_at(measure, panels, evaluator, np.asarray(x, dtype=float)[None])[0])


def kernel_field(measure, panels: PanelSet, grid: GridDomain) -> np.ndarray:
    """Kernel part of the potential on every masked cell of ``grid``."""
    cells = grid.cell_centers()
    w = _weights(measure)
    out = np.empty(len(cells))
    step = max(1, int(4_000_000 // len(panels)))
    for s in range(0, len(cells), step):
        out[s:s + step] = _regularized_kernel(cells[s:s + step], panels) @ w
    return out


def correction_field(measure, panels: PanelSet, evaluator: GreenEvaluator, grid: GridDomain) -> np.ndarray:
    """Harmonic part of the potential on every masked cell of ``grid``."""
    w = _weights(measure)
    if isinstance(evaluator, GridGreen) and evaluator.grid is grid:
        return evaluator.correction_sum_cells(panels.midpoints, w)
    return evaluator.correction_sum(grid.cell_centers(), panels.midpoints, w)


def potential_field(measure, panels: PanelSet, evaluator: GreenEvaluator, h: float | None = None,
                    grid: GridDomain | None = None) -> GridField:
    """Equilibrium (or any panel-measure) potential sampled on a grid."""
    if grid is None:
        grid = evaluator.field_grid(h)
    vals = np.full(grid.shape, np.nan)
    vals[grid.mask] = kernel_field(measure, panels, grid) + correction_field(measure, panels, evaluator, grid)
    return GridField(grid, vals)


# ---------------------------------------------------------------------------
# Verification
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class EquilibriumReport:
    deviations: np.ndarray  # (Mw)_i - energy per panel
    max_support_deviation: float
    min_slack: float
    passed: bool


def verify_equilibrium(result: EquilibriumResult, tol: float, matrix: EnergyMatrix | None = None,
                       weights=None) -> EquilibriumReport:
    """Check that the potential equals the energy on the support and is not below it elsewhere.

    ``weights`` overrides the result's measure, for probing perturbed measures.
    """
    matrix = matrix if matrix is not None else result.matrix
    if matrix is None:
        raise SolverError("verification needs the energy matrix")
    w = result.weights if weights is None else np.asarray(weights, dtype=float)
    Mw = matrix.entries @ w
    energy = float(w @ Mw)
    dev = Mw - energy
    support = w > 1e-8
    max_dev = float(np.max(np.abs(dev[support]))) if support.any() else 0.0
    min_slack = float(np.min(dev))
    passed = max_dev <= tol and min_slack >= -tol
    return EquilibriumReport(dev, max_dev, min_slack, passed)


def measure_deviation(a, b) -> float:
    """Max-norm weight difference relative to the largest weight of ``a``."""
    wa, wb = _weights(a), _weights(b)
    if wa.shape != wb.shape:
        raise DomainError("measures live on different panel sets")
    return float(np.max(np.abs(wa - wb)) / np.max(wa))


def flux_check(field: GridField, contour, panels: PanelSet | None = None, n: int = 2) -> float:
    """Discrete outward flux of ``field`` through an axis-aligned rectangle.

    ``contour`` is ``(xmin, xmax, ymin, ymax)``; the cells whose centers lie
    inside form the enclosed region and the flux is summed over the cell
    faces on its border.  For a unit-mass Green potential the result should
    be ``-kappa_n`` when the rectangle encloses the mass and 0 otherwise.
    """
    if n != 2:
        raise DomainError("flux check is planar only")
    grid = field.grid
    xmin, xmax, ymin, ymax = contour
    X, Y = np.meshgrid(grid.xs, grid.ys, indexing="ij")
    region = (X > xmin) & (X < xmax) & (Y > ymin) & (Y < ymax)
    if not region.any():
        raise DomainError("contour encloses no cells")
    if region[0, :].any() or region[-1, :].any() or region[:, 0].any() or region[:, -1].any():
        raise DomainError("contour exits the domain")
    if panels is not None and len(panels):
        pts = panels.points()
        h = grid.h
        inside = ((pts[:, 0] > xmin + h) & (pts[:, 0] < xmax - h)
                  & (pts[:, 1] > ymin + h) & (pts[:, 1] < ymax - h))
        outside = ((pts[:, 0] < xmin - h) | (pts[:, 0] > xmax + h)
                   | (pts[:, 1] < ymin - h) | (pts[:, 1] > ymax + h))
        if not (inside.all() or outside.all()):
            raise DomainError("contour intersects the compact set")
    v = field.values
    total = 0.0
    for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
        nbr_region = np.roll(region, (-di, -dj), axis=(0, 1))
        faces = region & ~nbr_region
        nbr_vals = np.roll(v, (-di, -dj), axis=(0, 1))
        if np.any(~np.isfinite(nbr_vals[faces])) or np.any(~np.isfinite(v[faces])):
            raise DomainError("contour exits the domain")
        total += float(np.sum(nbr_vals[faces] - v[faces]))
    return total


def cell_set_capacity(mask: np.ndarray, origin, h: float, reference: Disk, max_blocks: int = 256) -> float:
    """Green capacity of a union of lattice cells relative to ``reference``.

    Each occupied block of cells is one uniformly charged square; blocks are
    coarsened until at most ``max_blocks`` remain, which can only enlarge the
    set and so errs on the side of a larger capacity.
    """
    ii, jj = np.nonzero(mask)
    if len(ii) == 0:
        return 0.0
    k = 1
    while True:
        blocks = np.unique(np.column_stack([ii // k, jj // k]), axis=0)
        if len(blocks) <= max_blocks:
            break
        k *= 2
    side = k * h
    if k == 1:
        centers = np.column_stack([origin[0] + blocks[:, 0] * h, origin[1] + blocks[:, 1] * h])
    else:
        lo = np.asarray(origin) - h / 2
        centers = lo + (blocks + 0.5) * side
    evaluator = DiskGreen(reference)
    if not np.all(evaluator.contains(centers)):
        raise DomainError("cell set is not inside the reference disk")
    M = kernel_matrix(centers, centers, 2)
    np.fill_diagonal(M, math.log(1 / side) + SQUARE_SELF_ENERGY)
    H = evaluator.correction(centers, centers)
    M += 0.5 * (H + H.T)
    result = solve_equilibrium(EnergyMatrix(M))
    return result.capacity


def concentric_sphere_energy(evaluator, radius: float, n_points: int = 2000) -> float:
    """Energy of the uniform measure on a sphere centered in a ball.

    The potential of that measure is constant inside the sphere, so the
    energy equals the potential at the ball center, computed here as the
    Green function averaged over quasi-uniform points on the sphere.
    """
    if evaluator.dim != 3:
        raise DomainError("expects a three-dimensional evaluator")
    c = np.asarray(evaluator.domain.center)
    k = np.arange(n_points) + 0.5
    phi = np.arccos(1 - 2 * k / n_points)
    theta = math.pi * (1 + 5**0.5) * k
    pts = c + radius * np.column_stack([np.cos(theta) * np.sin(phi), np.sin(theta) * np.sin(phi), np.cos(phi)])
    return float(np.mean(evaluator.green_matrix(c[None], pts)))


def riesz_constant(n: int = 2) -> float:
    return KernelConstant.for_dimension(n).kappa


class DomainSolution:
    """Equilibrium problem of a panel set in one domain, solved once.

    Bundles the evaluator, energy matrix and result, and caches the
    potential field on the evaluator's grid.
    """

    def __init__(self, panels: PanelSet, domain, h: float | None = None, mode: str = "auto",
                 evaluator: GreenEvaluator | None = None, tolerance: float | None = None):
        from .kernel import make_evaluator

        self.panels = panels
        self.domain = domain
        self.h = h
        self.evaluator = evaluator if evaluator is not None else make_evaluator(domain, h, mode)
        self.matrix = assemble(panels, self.evaluator)
        self.result = solve_equilibrium(self.matrix, tolerance)
        self._field = None

    @property
    def energy(self) -> float:
        return self.result.energy

    @property
    def weights(self) -> np.ndarray:
        return self.result.weights

    @property
    def grid(self) -> GridDomain:
        return self.field().grid

    def field(self) -> GridField:
        if self._field is None:
            self._field = potential_field(self.result.measure, self.panels, self.evaluator, self.h)
        return self._field
