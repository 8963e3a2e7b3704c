"""Rubik-table planners for makespan-bounded robot routing on dense grids."""

from .gridcore import (GridSpace, Instance, InvalidPlanError, Metrics, Plan, StructuralError,
                       ValidationReport, compute_metrics, makespan_lower_bound, validate_plan)
from .pipeline2d import RegimeError, SolverOptions, fill_virtual, solve_grh, solve_grlm, solve_grm
from .pipeline3d import solve_grh3d
from .refine import refine

__all__ = [
    "GridSpace", "Instance", "InvalidPlanError", "Metrics", "Plan", "RegimeError", "SolverOptions",
    "StructuralError", "ValidationReport", "compute_metrics", "fill_virtual", "makespan_lower_bound",
    "refine", "solve_grh", "solve_grh3d", "solve_grlm", "solve_grm", "validate_plan",
]
