"""Existence and stability checks for vector optimization problems with
unbounded feasible sets, via asymptotic cones and asymptotic functions.

Core modules: expr (objective expressions), geometry (polyhedral sets and
cones), asymptotic (asymptotic functions and coercivity conditions), pareto
(grid solvers) and stability (perturbation sweeps). The CLI lives in cli.
"""
from .asymptotic import (AsymConfig, asym_value, check_condition, convex_sup_value, epsilon_threshold,
                         lambda_asym_value, q_asym_value)
from .expr import PerturbationMatrix, VectorObjective, classify, from_json, perturb
from .geometry import Box, GridSpec, PointCloud, Polyhedron, PolyUnion, asymptotic_cone, grid_points
from .pareto import achievement_psi, solve_front, solve_scalar, solve_weak_front
from .problems import ProblemSpec, RunConfig, load_bundled, parse_problem

__version__ = "0.1.0"

__all__ = [
    "AsymConfig", "asym_value", "check_condition", "convex_sup_value", "epsilon_threshold", "lambda_asym_value",
    "q_asym_value", "PerturbationMatrix", "VectorObjective", "classify", "from_json", "perturb", "Box",
    "GridSpec", "PointCloud", "Polyhedron", "PolyUnion", "asymptotic_cone", "grid_points", "achievement_psi",
    "solve_front", "solve_scalar", "solve_weak_front", "ProblemSpec", "RunConfig", "load_bundled",
    "parse_problem",
]
