"""Change of variables t = T·s between the free-horizon problem and the unit-interval problem."""

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import interp1d

from src.discretization.grid import Grid
from src.discretization.operator import DiscreteOperator
from src.problem.spec import ProblemSpec
from src.solvers.fields import SpaceTimeField
from src.solvers.state import march_linearized, march_state, operator_for, operator_residual


class HorizonMismatchError(ValueError):
    """A field tagged for one horizon was used with another."""


@dataclass(frozen=True, slots=True)
class ControlPoint:
    """Decision variable of the reduced problem: horizon T and control v on the unit interval."""

    T: float
    v: SpaceTimeField

    def __post_init__(self) -> None:
        if not self.v.is_reduced:
            raise HorizonMismatchError(f"control point needs a unit-interval control, got horizon {self.v.horizon}")
        if not self.T > 0.0:
            raise ValueError(f"horizon must be positive, got {self.T}")

    @property
    def grid(self) -> Grid:
        return self.v.grid

    def check_bracket(self, spec: ProblemSpec) -> None:
        if not spec.T_lo <= self.T <= spec.T_hi:
            raise ValueError(f"T={self.T} outside horizon bracket [{spec.T_lo}, {spec.T_hi}]")


@dataclass(frozen=True, slots=True)
class PhysicalDirection:
    T_hat: float
    y_hat: SpaceTimeField
    u_hat: SpaceTimeField


@dataclass(frozen=True, slots=True)
class ReducedDirection:
    """(T̂, ζ̂, v̂) on the unit interval; the time component is ξ̂(s) = T̂·s."""

    T_hat: float
    zeta_hat: SpaceTimeField
    v_hat: SpaceTimeField

    @property
    def xi_hat(self) -> np.ndarray:
        return self.T_hat * self.v_hat.grid.s

    def scaled(self, factor: float) -> "ReducedDirection":
        return ReducedDirection(factor * self.T_hat, self.zeta_hat.scaled(factor), self.v_hat.scaled(factor))

    def __add__(self, other: "ReducedDirection") -> "ReducedDirection":
        return ReducedDirection(self.T_hat + other.T_hat, self.zeta_hat + other.zeta_hat, self.v_hat + other.v_hat)

    def __sub__(self, other: "ReducedDirection") -> "ReducedDirection":
        return ReducedDirection(self.T_hat - other.T_hat, self.zeta_hat - other.zeta_hat, self.v_hat - other.v_hat)


def to_reduced(u: SpaceTimeField, T: float) -> SpaceTimeField:
    if u.horizon is None or u.horizon != T:
        raise HorizonMismatchError(f"field tagged with horizon {u.horizon} cannot be rescaled with T={T}")
    return SpaceTimeField(u.values.copy(), u.grid, None)


def from_reduced(v: SpaceTimeField, T: float) -> SpaceTimeField:
    if not v.is_reduced:
        raise HorizonMismatchError(f"expected a unit-interval field, got horizon {v.horizon}")
    if not T > 0.0:
        raise ValueError(f"horizon must be positive, got {T}")
    return SpaceTimeField(v.values.copy(), v.grid, T)


def resample(field: SpaceTimeField, n_steps: int) -> SpaceTimeField:
    """Linear interpolation in time onto a uniform partition with n_steps steps."""
    target = field.grid.with_resolution(field.grid.counts, n_steps)
    interpolant = interp1d(field.grid.s, field.values, axis=0, kind="linear")
    return SpaceTimeField(interpolant(target.s), target, field.horizon)


def reduced_state(spec: ProblemSpec, grid: Grid, cp: ControlPoint, op: DiscreteOperator | None = None) -> SpaceTimeField:
    return SpaceTimeField(march_state(spec, grid, cp.T, cp.v.values, op), grid, None)


def running_integral(spec: ProblemSpec, grid: Grid, T: float, z: np.ndarray, v: np.ndarray) -> float:
    times = T * grid.s
    density = spec.running_cost("value", grid.coords, times[:, None], z, v)
    return float(np.sum((T * grid.time_weights) * np.sum(density, axis=1)) * grid.weight)


def objective_reduced(spec: ProblemSpec, grid: Grid, cp: ControlPoint, zeta: SpaceTimeField) -> float:
    terminal = spec.terminal_cost.value(cp.T, zeta.terminal, grid.weight)
    return terminal + running_integral(spec, grid, cp.T, zeta.values, cp.v.values)


def objective_physical(spec: ProblemSpec, grid: Grid, T: float, y: SpaceTimeField, u: SpaceTimeField) -> float:
    if y.horizon != T or u.horizon != T:
        raise HorizonMismatchError("physical objective needs fields tagged with the same horizon T")
    terminal = spec.terminal_cost.value(T, y.terminal, grid.weight)
    return terminal + running_integral(spec, grid, T, y.values, u.values)


def state_defect(spec: ProblemSpec, grid: Grid, T: float, z: np.ndarray, v: np.ndarray, op: DiscreteOperator) -> np.ndarray:
    """X = A z + ψ - v at every level, on the physical time levels T·s."""
    return operator_residual(spec, op, grid.coords, T * grid.s, z, v)


def direction_state(
    spec: ProblemSpec,
    grid: Grid,
    cp: ControlPoint,
    zeta: SpaceTimeField,
    T_hat: float,
    v_hat: np.ndarray,
    op: DiscreteOperator | None = None,
) -> SpaceTimeField:
    """Exact linearization of the reduced θ-scheme at (T, v) in direction (T̂, v̂), started from zero."""
    op = op or operator_for(spec, grid)
    times = cp.T * grid.s
    c = spec.psi("y", grid.coords, times[:, None], zeta.values)
    psi_t = spec.psi("t", grid.coords, times[:, None], zeta.values)
    defect = state_defect(spec, grid, cp.T, zeta.values, cp.v.values, op)
    rhs = v_hat - (T_hat / cp.T) * defect - (T_hat * grid.s)[:, None] * psi_t
    values = march_linearized(op, grid, cp.T, c, rhs, np.zeros(grid.n_interior))
    return SpaceTimeField(values, grid, None)


def _step_residuals(grid: Grid, h: float, level_terms: np.ndarray, increment_field: np.ndarray) -> np.ndarray:
    theta = grid.theta
    increments = increment_field[1:] - increment_field[:-1]
    return increments + h * (theta * level_terms[1:] + (1.0 - theta) * level_terms[:-1])


def linearized_residual_reduced(
    spec: ProblemSpec,
    grid: Grid,
    cp: ControlPoint,
    zeta: SpaceTimeField,
    direction: ReducedDirection,
    op: DiscreteOperator | None = None,
) -> float:
    """Sup-norm residual of the discrete reduced linearized equation, including ζ̂(0) = 0."""
    op = op or operator_for(spec, grid)
    times = cp.T * grid.s
    x = grid.coords
    zh, vh = direction.zeta_hat.values, direction.v_hat.values
    xi = direction.xi_hat[:, None]
    defect = state_defect(spec, grid, cp.T, zeta.values, cp.v.values, op)
    terms = (
        op.apply(zh)
        + spec.psi("t", x, times[:, None], zeta.values) * xi
        + spec.psi("y", x, times[:, None], zeta.values) * zh
        - vh
        + (direction.T_hat / cp.T) * defect
    )
    residual = _step_residuals(grid, cp.T * grid.step, terms, zh)
    return max(float(np.max(np.abs(residual), initial=0.0)), float(np.max(np.abs(zh[0]), initial=0.0)))


def linearized_residual_physical(
    spec: ProblemSpec,
    grid: Grid,
    T_star: float,
    y_star: SpaceTimeField,
    u_star: SpaceTimeField,
    direction: PhysicalDirection,
    op: DiscreteOperator | None = None,
) -> float:
    """Same residual written in physical time t ∈ [0, T*] with the T̂·t/T* time perturbation."""
    op = op or operator_for(spec, grid)
    times = y_star.times
    x = grid.coords
    yh, uh = direction.y_hat.values, direction.u_hat.values
    defect = operator_residual(spec, op, x, times, y_star.values, u_star.values)
    terms = (
        op.apply(yh)
        + spec.psi("t", x, times[:, None], y_star.values) * (direction.T_hat * times / T_star)[:, None]
        + spec.psi("y", x, times[:, None], y_star.values) * yh
        - uh
        + (direction.T_hat / T_star) * defect
    )
    residual = _step_residuals(grid, T_star * grid.step, terms, yh)
    return max(float(np.max(np.abs(residual), initial=0.0)), float(np.max(np.abs(yh[0]), initial=0.0)))


def transport_direction(direction: PhysicalDirection, T_star: float) -> ReducedDirection:
    return ReducedDirection(
        T_hat=float(direction.T_hat),
        zeta_hat=to_reduced(direction.y_hat, T_star),
        v_hat=to_reduced(direction.u_hat, T_star),
    )


def _extended(field: SpaceTimeField, horizon: float) -> interp1d:
    times = field.grid.s * horizon
    return interp1d(
        times, field.values, axis=0, kind="linear", bounds_error=False, fill_value=(field.values[0], field.values[-1])
    )


def definition_distance(
    T1: float, y1: SpaceTimeField, u1: SpaceTimeField, T2: float, y2: SpaceTimeField, u2: SpaceTimeField
) -> float:
    """|T1-T2| + sup|ỹ1-ỹ2| + sup|ũ1-ũ2| with fields extended past their horizon by their last level."""
    times = np.union1d(y1.grid.s * T1, y2.grid.s * T2)
    y_gap = np.max(np.abs(_extended(y1, T1)(times) - _extended(y2, T2)(times)), initial=0.0)
    u_gap = np.max(np.abs(_extended(u1, T1)(times) - _extended(u2, T2)(times)), initial=0.0)
    return abs(T1 - T2) + float(y_gap) + float(u_gap)
