"""Green equilibrium energies, measures and level domains of compact sets in planar domains."""

from __future__ import annotations

from .config import ScenarioConfig, load_config
from .dirichlet import GridField, laplacian_residual, solve_dirichlet
from .equilibrium import (DiscreteMeasure, DomainSolution, EnergyMatrix, EquilibriumResult, assemble,
                          capacity, flux_check, measure_deviation, panel_self_energy, potential,
                          potential_field, solve_equilibrium, verify_equilibrium)
from .errors import (ConfigError, ConvergenceError, DomainError, GreenPotError, LevelSetError,
                     ResolutionError, SolverError)
from .geometry import (Annulus, Arc, Ball3, Circle, Disk, FilledDisk, GridDomain, HalfPlane, PanelSet,
                       Polyline, Segment, contains, discretize_boundary, near_equality_proxy,
                       nearly_equal, rasterize_domain)
from .kernel import green_ball3, green_disk, green_halfplane, green_numeric, kernel, make_evaluator
from .lab import ReportManifest, run_scenario, run_scenarios
from .levelset import contains_compact, extract_level_domain, reconstruct_domain, verify_level_lemma
from .transforms import InversionSpec, green_inversion_identity_check, invert_domain, invert_point

__version__ = "0.1.0"
