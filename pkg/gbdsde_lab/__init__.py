"""Numerical lab for backward doubly stochastic equations driven by Teugels martingales."""

from __future__ import annotations

from .approx_ladder import cauchy_diagnostics, minimality_check, run_ladder
from .comparison_lab import compare, gamma_recursion_check, representation_check
from .config import CONFIG_SCHEMA, ExperimentConfig, load_config
from .coordinator import LabCoordinator
from .lattice import build_lattice
from .levy_basis import JumpMeasure, teugels_basis
from .path_engine import empirical_bracket, simulate_ensemble
from .solver import norms, picard_solve, solve_backward

__all__ = [
    "CONFIG_SCHEMA",
    "ExperimentConfig",
    "JumpMeasure",
    "LabCoordinator",
    "build_lattice",
    "cauchy_diagnostics",
    "compare",
    "empirical_bracket",
    "gamma_recursion_check",
    "load_config",
    "minimality_check",
    "norms",
    "picard_solve",
    "representation_check",
    "run_ladder",
    "simulate_ensemble",
    "solve_backward",
    "teugels_basis",
]
