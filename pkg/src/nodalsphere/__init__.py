"""Least-energy sign-changing solutions of a singularly perturbed
Schrodinger equation with cylindrical symmetry.

The solver minimizes a penalized energy over the nodal Nehari set on a
reduced two-variable grid, then certifies that the minimizer solves the
original, un-truncated equation and measures how its two concentration
spheres migrate as the semiclassical parameter shrinks.
"""

from .diagnostics import (CertificationReport, DecayFit, EpsRecord,
                          build_record, certification_trend,
                          certify_original, concentration_weight, decay_fit,
                          energy_scaling, fit_exponential_decay,
                          peak_admissibility, peak_migration,
                          seed_energy_slack, threshold_a, trend_summary,
                          write_concentration_csv)
from .energy import (EnergyModel, coercivity_check, descent_direction_check,
                     energy, gradient, newton_polish, nodal_nehari_project,
                     penalized_source, psi_surface, pure_power_source,
                     residual_norm, scalar_nehari_project)
from .errors import (ConfigurationError, ConstructionError, FitError,
                     InitializationError, NodalDegeneracyError, NumericError,
                     ProjectionError, ResourceLimitError, SolverError,
                     UsageError)
from .geometry import (Omega, Potential, ProblemConfig, SpherePoint,
                       parse_config_file, sphere_distance,
                       unit_sphere_measure, validate_config)
from .grid import (ReducedGrid, build_grid, build_radial_grid,
                   read_field_bin, write_field_bin, write_field_csv)
from .limit_problem import (AuxPotentialMap, GroundState, aux_potential,
                            build_ground_energy_table, require_interior_min,
                            solve_ground_state, soliton_1d)
from .nonlinearity import (PenalizedNonlinearity, build_penalized,
                           corrupted_band, verify_penalization)
from .solver import (NodalSolution, build_model, initial_guess,
                     minimize_nodal, solve_nodal, summarize_solution)

__version__ = "0.1.0"

__all__ = [
    "ConfigurationError", "ConstructionError", "FitError",
    "InitializationError", "NodalDegeneracyError", "NumericError",
    "ProjectionError", "ResourceLimitError", "SolverError", "UsageError",
    "Omega", "Potential", "ProblemConfig", "SpherePoint",
    "parse_config_file", "sphere_distance", "unit_sphere_measure",
    "validate_config",
    "PenalizedNonlinearity", "build_penalized", "corrupted_band",
    "verify_penalization",
    "ReducedGrid", "build_grid", "build_radial_grid",
    "read_field_bin", "write_field_bin", "write_field_csv",
    "EnergyModel", "energy", "gradient", "residual_norm",
    "pure_power_source", "penalized_source",
    "scalar_nehari_project", "nodal_nehari_project", "psi_surface",
    "coercivity_check", "descent_direction_check", "newton_polish",
    "AuxPotentialMap", "GroundState", "soliton_1d", "solve_ground_state",
    "build_ground_energy_table", "aux_potential", "require_interior_min",
    "NodalSolution", "build_model", "initial_guess", "minimize_nodal",
    "solve_nodal", "summarize_solution",
    "EpsRecord", "DecayFit", "CertificationReport",
    "threshold_a", "peak_admissibility", "fit_exponential_decay",
    "decay_fit", "certify_original", "build_record",
    "write_concentration_csv", "concentration_weight", "energy_scaling",
    "peak_migration", "certification_trend", "seed_energy_slack",
    "trend_summary",
    "__version__",
]
