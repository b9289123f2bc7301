"""Sparse structural VAR estimation with acyclicity and partial-ordering constraints."""

from __future__ import annotations

__version__ = "0.1.0"

from .evaluation import (GridSearchReport, SkeletonMetrics, aggregate, default_mu_A_grid,
                         default_mu_B_grid, grid_search, normalize_columns, one_step_forecast,
                         relative_l2_error, run_replicate, skeleton_metrics, varsortability)
from .model import (CycleError, NoiseSpec, StructuralSingularityError, SVARModel,
                    TimeSeriesSample, companion_matrix, is_acyclic, is_stable, spectral_radius,
                    topological_order, verify_acyclicity_certificate)
from .ordering import (PartialOrdering, allowed_parents, from_regulator_target, from_tiers,
                       load_prior, random_nonsupport_mask)
from .simulate import (SETTINGS, GenerationError, SettingSpec, builtin_setting,
                       generate_parameters, simulate)
from .solver import (ConvergenceWarning, FitResult, Hyperparams, SolverState, admm_solve,
                     augmented_lagrangian, fit, project_to_dag, update_w)

__all__ = [name for name in dir() if not name.startswith("_")]
