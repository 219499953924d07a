"""Forward and linearized marching plus the change of time variable."""

from src.solvers.fields import SpaceTimeField
from src.solvers.reduction import ControlPoint, from_reduced, reduced_state, to_reduced
from src.solvers.state import NewtonConvergenceError, StateSolveError, solve_linearized, solve_state

__all__ = [
    "ControlPoint",
    "NewtonConvergenceError",
    "SpaceTimeField",
    "StateSolveError",
    "from_reduced",
    "reduced_state",
    "solve_linearized",
    "solve_state",
    "to_reduced",
]
