"""Optimality system, solver, batch evaluation and reporting."""

from src.core.evaluator import BatchEvaluator
from src.core.optimality import KKTReport, MultiplierSet, compute_multipliers, kkt_residuals
from src.core.optimizer import ReducedProblemSolver, SolveResult, growth_certificate, solve

__all__ = [
    "BatchEvaluator",
    "KKTReport",
    "MultiplierSet",
    "ReducedProblemSolver",
    "SolveResult",
    "compute_multipliers",
    "growth_certificate",
    "kkt_residuals",
    "solve",
]
