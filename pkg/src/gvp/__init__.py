"""Discretized Gauss variational problem for signed vector measures on condensers
with Riesz kernels."""

from .geometry import ProfileSpec, ShapeSpec, generate_nodes, nearest_neighbor_distances
from .kernel import EnergyForm, KernelSpec, assemble_gram, evaluate
from .measures import (
    Condenser,
    DiscreteMeasure,
    Plate,
    SignedMeasure,
    ValidationError,
    VectorMeasure,
    g_moment,
    r_map,
    validate,
)
from .energy import (
    EnergyContext,
    energy_norm,
    gauss_value,
    gauss_value_shifted,
    mutual_energy,
    strong_distance,
    vector_energy,
    weighted_potential,
)
from .projection import (
    ConeProjector,
    balayage,
    capacity,
    equilibrium_measure,
    green_energy,
    project_onto_cone,
)
from .solver import (
    KktReport,
    SolveReport,
    SolverOptions,
    solve_auxiliary,
    solve_auxiliary_direct,
    solve_gauss,
    verify_kkt,
)
from .diagnostics import (
    ExhaustionRecord,
    SolvabilityReport,
    coarse_bound_check,
    exhaustion_sweep,
    sigma_threshold,
    solvable_cone_scan,
)
from .scenario import Scenario, ScenarioError, parse_scenario

__all__ = [name for name in dir() if not name.startswith("_")]
