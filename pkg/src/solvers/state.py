"""θ-scheme marching for the semilinear state equation and its linearization.

Controls are collocated at time levels and enter step k as θ·u_{k+1} + (1 - θ)·u_k.
For θ = 1 only u_{k+1} is used, so the control is piecewise constant on (t_k, t_{k+1}]
and the value at level 0 never enters the march.
"""

import numpy as np
import scipy.sparse as sp
from loguru import logger
from scipy.sparse.linalg import spsolve

from src.config.settings import get_settings
from src.discretization.grid import Grid
from src.discretization.operator import DiscreteOperator, assemble_operator
from src.problem.spec import ProblemSpec
from src.solvers.fields import SpaceTimeField


class StateSolveError(RuntimeError):
    """The forward or linearized march produced no usable trajectory."""


class NewtonConvergenceError(StateSolveError):
    def __init__(self, step: int, residual: float, iterations: int):
        self.step = step
        self.residual = residual
        self.iterations = iterations
        super().__init__(f"Newton failed at step {step}: residual {residual:.3e} after {iterations} iterations")


def operator_for(spec: ProblemSpec, grid: Grid) -> DiscreteOperator:
    return assemble_operator(grid, spec.diffusion)


def implicit_matrix(op: DiscreteOperator, h: float, theta: float, c: np.ndarray) -> sp.csc_matrix:
    """I + h·θ·(A + diag c): the matrix multiplying the new level."""
    eye = sp.identity(op.size, format="csr")
    return sp.csc_matrix(eye + (h * theta) * (op.matrix + sp.diags(c)))


def explicit_matrix(op: DiscreteOperator, h: float, theta: float, c: np.ndarray) -> sp.csr_matrix:
    """I - h·(1-θ)·(A + diag c): the matrix acting on the old level."""
    eye = sp.identity(op.size, format="csr")
    return sp.csr_matrix(eye - (h * (1.0 - theta)) * (op.matrix + sp.diags(c)))


def operator_residual(
    spec: ProblemSpec, op: DiscreteOperator, x: np.ndarray, times: np.ndarray, z: np.ndarray, v: np.ndarray
) -> np.ndarray:
    """A z + ψ(x, t, z) - v at every level; shape (levels, n)."""
    return op.apply(z) + spec.psi("value", x, times[:, None], z) - v


def march_state(
    spec: ProblemSpec,
    grid: Grid,
    T: float,
    controls: np.ndarray,
    op: DiscreteOperator | None = None,
    newton_tol: float | None = None,
    max_iters: int | None = None,
) -> np.ndarray:
    """Fully implicit θ-scheme with per-step Newton; physical step T·Δ, levels at times T·s_k."""
    settings = get_settings()
    tol = settings.newton_tol if newton_tol is None else newton_tol
    cap = settings.newton_max_iters if max_iters is None else max_iters
    op = op or operator_for(spec, grid)
    x = grid.coords
    times = T * grid.s
    h = T * grid.step
    theta = grid.theta

    trajectory = np.empty((grid.levels, grid.n_interior))
    trajectory[0] = spec.y0(x)
    for k in range(grid.n_steps):
        old = trajectory[k]
        old_part = op.matrix @ old + spec.psi("value", x, times[k], old) - controls[k]
        explicit = old - (h * (1.0 - theta)) * old_part
        t_new = times[k + 1]
        z = old.copy()
        for iteration in range(cap + 1):
            residual = z - explicit + (h * theta) * (op.matrix @ z + spec.psi("value", x, t_new, z) - controls[k + 1])
            size = float(np.max(np.abs(residual))) if residual.size else 0.0
            if not np.isfinite(size):
                raise StateSolveError(f"non-finite residual at step {k}")
            if size <= tol:
                break
            if iteration == cap:
                raise NewtonConvergenceError(step=k, residual=size, iterations=cap)
            jacobian = implicit_matrix(op, h, theta, spec.psi("y", x, t_new, z))
            z = z - np.atleast_1d(spsolve(jacobian, residual))
        trajectory[k + 1] = z
    if not np.all(np.isfinite(trajectory)):
        raise StateSolveError("trajectory contains NaN or Inf")
    return trajectory


def solve_state(
    spec: ProblemSpec, grid: Grid, T: float, u: SpaceTimeField, op: DiscreteOperator | None = None
) -> SpaceTimeField:
    if T <= 0.0:
        raise ValueError(f"horizon must be positive, got {T}")
    if u.grid != grid:
        raise ValueError("control is defined on a different grid")
    logger.debug("Forward solve: T={} levels={} nodes={}", T, grid.levels, grid.n_interior)
    return SpaceTimeField(march_state(spec, grid, T, u.values, op), grid, T)


def march_linearized(
    op: DiscreteOperator, grid: Grid, T: float, c: np.ndarray, rhs: np.ndarray, init: np.ndarray
) -> np.ndarray:
    h = T * grid.step
    theta = grid.theta
    trajectory = np.empty((grid.levels, grid.n_interior))
    trajectory[0] = init
    for k in range(grid.n_steps):
        explicit = explicit_matrix(op, h, theta, c[k]) @ trajectory[k]
        source = h * (theta * rhs[k + 1] + (1.0 - theta) * rhs[k])
        trajectory[k + 1] = np.atleast_1d(spsolve(implicit_matrix(op, h, theta, c[k + 1]), explicit + source))
    if not np.all(np.isfinite(trajectory)):
        raise StateSolveError("linearized step matrix is singular or the solution blew up")
    return trajectory


def solve_linearized(
    spec: ProblemSpec,
    grid: Grid,
    T: float,
    c: SpaceTimeField,
    rhs: SpaceTimeField,
    init: np.ndarray,
    op: DiscreteOperator | None = None,
) -> SpaceTimeField:
    """y_t + A y + c y = rhs on [0, T] with y(0) = init, one sparse solve per step."""
    if T <= 0.0:
        raise ValueError(f"horizon must be positive, got {T}")
    op = op or operator_for(spec, grid)
    values = march_linearized(op, grid, T, c.values, rhs.values, np.asarray(init, dtype=float))
    return SpaceTimeField(values, grid, rhs.horizon)


def space_time_norm(field: SpaceTimeField, T: float, p: float) -> float:
    grid = field.grid
    weights = grid.time_weights * T * grid.weight
    return float(np.sum(weights[:, None] * np.abs(field.values) ** p) ** (1.0 / p))


def sup_norm_bound_check(
    spec: ProblemSpec, y: SpaceTimeField, u: SpaceTimeField, y0: np.ndarray, p: float = 2.5
) -> float:
    """Stability telemetry: ‖y‖_∞ over the data size ‖u‖_p + ‖y0‖_∞ + ‖ψ(·,·,0)‖_p."""
    T = 1.0 if y.horizon is None else y.horizon
    psi_zero = u.with_values(spec.psi("value", y.grid.coords, y.times[:, None], np.zeros_like(y.values)))
    data = space_time_norm(u, T, p) + float(np.max(np.abs(y0), initial=0.0)) + space_time_norm(psi_zero, T, p)
    return y.sup_norm() / (data + np.finfo(float).eps)


def forward_step(
    op: DiscreteOperator, h: float, theta: float, c_old: np.ndarray, c_new: np.ndarray, x: np.ndarray
) -> np.ndarray:
    """Homogeneous linearized step x_k ↦ x_{k+1}."""
    return np.atleast_1d(spsolve(implicit_matrix(op, h, theta, c_new), explicit_matrix(op, h, theta, c_old) @ x))


def transposed_step(
    op: DiscreteOperator, h: float, theta: float, c_old: np.ndarray, c_new: np.ndarray, y: np.ndarray
) -> np.ndarray:
    """Exact transpose of forward_step; step matrices are symmetric."""
    return explicit_matrix(op, h, theta, c_old) @ np.atleast_1d(spsolve(implicit_matrix(op, h, theta, c_new), y))
