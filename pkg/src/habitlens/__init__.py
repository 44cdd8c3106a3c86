"""Revealed-preference tests for habit formation over product characteristics."""

from __future__ import annotations

__version__ = "0.1.0"

from .dynamic import (Certificate, TestOutcome, admissible_beta_set, ccei, default_grid, feasible_at_beta,
                      run_test)
from .errors import HabitlensError, InputError
from .hedonic import Technology, active_slice, augmented_path, build_augmented_matrix
from .models import ModelSpec, builtin_models, run_model
from .panel import HouseholdPanel, build_periods, panels_from_events, read_purchases
from .report import compare, mcnemar_exact, pass_rate_table
from .restrict import PerturbConfig, restrictiveness_report
from .structural import distance_to_manifold, rank_condition, structural_verdict
from .synth import GeneratorConfig, generate_behavioural_violation, generate_rationalisable, \
    generate_structural_violation

__all__ = [
    "Certificate", "GeneratorConfig", "HabitlensError", "HouseholdPanel", "InputError", "ModelSpec",
    "PerturbConfig", "Technology", "TestOutcome", "active_slice", "admissible_beta_set", "augmented_path",
    "build_augmented_matrix", "build_periods", "builtin_models", "ccei", "compare", "default_grid",
    "distance_to_manifold", "feasible_at_beta", "generate_behavioural_violation", "generate_rationalisable",
    "generate_structural_violation", "mcnemar_exact", "panels_from_events", "pass_rate_table", "rank_condition",
    "read_purchases", "restrictiveness_report", "run_model", "run_test", "structural_verdict",
]
