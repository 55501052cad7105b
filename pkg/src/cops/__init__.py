"""Solvers and tools for the Clustered Orienteering Problem with Subgroups."""
from .core import (
    Cluster,
    FEAS_TOL,
    InfeasibleInstanceError,
    Instance,
    InvalidArgumentError,
    Metric,
    SemanticError,
    Solution,
    Subgroup,
    Violation,
    check_instance,
    edge_cost,
    evaluate,
    route_cost,
    validate,
)
from .estimators import ExactSolver, TabuSearchSolver
from .exact import IlpModel, build_ilp, export_lp, held_karp_path, held_karp_tour, separate_subtours, solve_exact
from .io import GeneratorConfig, ParseError, adapt_cop, adapt_sop, generate, parse_cops, write_cops
from .tabu import SearchParams, solve_tabu

__version__ = "0.1.0"

__all__ = [
    "Cluster",
    "ExactSolver",
    "FEAS_TOL",
    "GeneratorConfig",
    "IlpModel",
    "InfeasibleInstanceError",
    "Instance",
    "InvalidArgumentError",
    "Metric",
    "ParseError",
    "SearchParams",
    "SemanticError",
    "Solution",
    "Subgroup",
    "TabuSearchSolver",
    "Violation",
    "adapt_cop",
    "adapt_sop",
    "build_ilp",
    "check_instance",
    "edge_cost",
    "evaluate",
    "export_lp",
    "generate",
    "held_karp_path",
    "held_karp_tour",
    "parse_cops",
    "route_cost",
    "separate_subtours",
    "solve_exact",
    "solve_tabu",
    "validate",
    "write_cops",
]
