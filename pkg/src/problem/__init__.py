"""Problem data: catalog ingredients, assembled specs and hypothesis checks."""

from src.problem.catalog import CatalogEntry, CatalogError, CatalogKind, Slot
from src.problem.hypotheses import HypothesisReport, SampleBox, check_hypotheses
from src.problem.spec import ProblemSpec, build_problem

__all__ = [
    "CatalogEntry",
    "CatalogError",
    "CatalogKind",
    "HypothesisReport",
    "ProblemSpec",
    "SampleBox",
    "Slot",
    "build_problem",
    "check_hypotheses",
]
