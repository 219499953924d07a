"""Discrete adjoints, multiplier recovery, and first-order residuals of the reduced problem."""

from dataclasses import dataclass, field
from typing import Any

import numpy as np
from loguru import logger
from scipy.sparse.linalg import spsolve

from src.config.settings import get_settings
from src.discretization.grid import Grid
from src.discretization.operator import DiscreteOperator
from src.problem.catalog import RUNNING_PARTIALS
from src.problem.spec import ProblemSpec
from src.solvers.fields import SpaceTimeField
from src.solvers.reduction import ControlPoint, reduced_state, running_integral, state_defect
from src.solvers.state import explicit_matrix, implicit_matrix, operator_for

GU_FLOOR = 1e-12
FD_STEPS = (1e-3, 1e-4, 1e-5, 1e-6)


class ConstraintQualificationError(ValueError):
    """g_u vanishes at a node, so the mixed-constraint multiplier cannot be recovered."""


@dataclass(slots=True)
class PointwiseData:
    """All nodal partials of L, ψ and g along a trajectory, on the physical times T·s_k."""

    times: np.ndarray
    L: dict[str, np.ndarray]
    psi: dict[str, np.ndarray]
    g: dict[str, np.ndarray]

    @classmethod
    def at(cls, spec: ProblemSpec, grid: Grid, T: float, z: np.ndarray, v: np.ndarray) -> "PointwiseData":
        times = T * grid.s
        x, t = grid.coords, times[:, None]
        return cls(
            times=times,
            L={p: spec.running_cost(p, x, t, z, v) for p in RUNNING_PARTIALS},
            psi={p: spec.psi(p, x, t, z, 0.0) for p in ("value", "t", "y", "tt", "ty", "yy")},
            g={p: spec.mixed_constraint(p, x, t, z, v) for p in RUNNING_PARTIALS},
        )


@dataclass(slots=True)
class MultiplierSet:
    """λ, μ, the adjoint field, the scalar time-adjoint, and the mixed-constraint multiplier field.

    ``adjoint`` holds the discrete adjoint with the terminal datum on its last level; the
    control-collocated adjoint used in stationarity is ``collocated_adjoint(grid, adjoint)``.
    """

    lam: float
    mu: np.ndarray
    adjoint: SpaceTimeField
    phi_scalar: np.ndarray
    e_field: SpaceTimeField

    def to_dict(self) -> dict[str, Any]:
        return {
            "lambda": float(self.lam),
            "mu": [float(v) for v in self.mu],
            "phi_scalar": [float(v) for v in self.phi_scalar],
            "e_sup": self.e_field.sup_norm(),
        }


@dataclass(slots=True)
class EFieldRecovery:
    field: SpaceTimeField
    discarded: np.ndarray

    @property
    def discarded_sup(self) -> float:
        return float(np.max(np.abs(self.discarded), initial=0.0))


@dataclass(slots=True)
class KKTReport:
    r_u: float
    r_T: float
    r_comp: float
    r_feas: float
    r_adj: float
    r_phi: float
    dT: float
    fd_crosschecks: dict[str, Any] = field(default_factory=dict)
    transport: dict[str, Any] = field(default_factory=dict)

    def passes(self, grad_tol: float, feas_tol: float) -> bool:
        return max(self.r_u, self.r_T) <= grad_tol and max(self.r_comp, self.r_feas) <= feas_tol

    def to_dict(self) -> dict[str, Any]:
        return {
            "r_u": self.r_u,
            "r_T": self.r_T,
            "r_comp": self.r_comp,
            "r_feas": self.r_feas,
            "r_adj": self.r_adj,
            "r_phi": self.r_phi,
            "dT": self.dT,
            "fd_crosschecks": self.fd_crosschecks,
            "transport": self.transport,
        }


def activity_tolerance(spec: ProblemSpec) -> float:
    return get_settings().act_tol_rel * (spec.b - spec.a)


def terminal_adjoint(spec: ProblemSpec, T: float, z_final: np.ndarray, lam: float, mu: np.ndarray) -> np.ndarray:
    datum = -lam * spec.terminal_cost.d_zeta(T, z_final)
    for weight, functional in zip(mu, spec.terminal_constraints):
        datum = datum - weight * functional.d_zeta(T, z_final)
    return datum


def collocated_adjoint(grid: Grid, adjoint: np.ndarray) -> np.ndarray:
    """Adjoint as seen by the control at each level: θ-weighted neighbours divided by τ_k."""
    theta, dt, tau = grid.theta, grid.step, grid.time_weights
    q = np.asarray(adjoint)
    out = np.array(q, dtype=float, copy=True)
    for k in range(grid.levels):
        if tau[k] == 0.0:
            continue
        acc = np.zeros(q.shape[1])
        if k >= 1:
            acc = acc + theta * q[k - 1]
        if k <= grid.n_steps - 1:
            acc = acc + (1.0 - theta) * q[k]
        out[k] = dt * acc / tau[k]
    return out


def _adjoint_source(data: PointwiseData, T: float, lam: float, e: np.ndarray) -> np.ndarray:
    return lam * T * data.L["y"] + e * data.g["y"]


def solve_adjoint(
    spec: ProblemSpec,
    grid: Grid,
    cp: ControlPoint,
    zeta: SpaceTimeField,
    lam: float,
    mu: np.ndarray,
    e_field: SpaceTimeField,
    op: DiscreteOperator | None = None,
    data: PointwiseData | None = None,
) -> SpaceTimeField:
    """Backward recursion with the exact transposes of the forward step matrices."""
    op = op or operator_for(spec, grid)
    data = data or PointwiseData.at(spec, grid, cp.T, zeta.values, cp.v.values)
    mu = np.asarray(mu, dtype=float)
    h, theta, tau = cp.T * grid.step, grid.theta, grid.time_weights
    source = _adjoint_source(data, cp.T, lam, e_field.values)

    q = np.empty((grid.levels, grid.n_interior))
    q[-1] = terminal_adjoint(spec, cp.T, zeta.terminal, lam, mu)
    for k in range(grid.n_steps, 0, -1):
        carried = q[k] if k == grid.n_steps else explicit_matrix(op, h, theta, data.psi["y"][k]) @ q[k]
        rhs = carried - tau[k] * source[k]
        q[k - 1] = np.atleast_1d(spsolve(implicit_matrix(op, h, theta, data.psi["y"][k]), rhs))
    return SpaceTimeField(q, grid, None)


def adjoint_residual(
    spec: ProblemSpec,
    grid: Grid,
    cp: ControlPoint,
    zeta: SpaceTimeField,
    M: MultiplierSet,
    op: DiscreteOperator | None = None,
    data: PointwiseData | None = None,
) -> float:
    op = op or operator_for(spec, grid)
    data = data or PointwiseData.at(spec, grid, cp.T, zeta.values, cp.v.values)
    h, theta, tau = cp.T * grid.step, grid.theta, grid.time_weights
    q = M.adjoint.values
    source = _adjoint_source(data, cp.T, M.lam, M.e_field.values)
    worst = float(np.max(np.abs(q[-1] - terminal_adjoint(spec, cp.T, zeta.terminal, M.lam, M.mu)), initial=0.0))
    for k in range(grid.n_steps, 0, -1):
        carried = q[k] if k == grid.n_steps else explicit_matrix(op, h, theta, data.psi["y"][k]) @ q[k]
        lhs = implicit_matrix(op, h, theta, data.psi["y"][k]) @ q[k - 1]
        worst = max(worst, float(np.max(np.abs(lhs - carried + tau[k] * source[k]), initial=0.0)))
    return worst


def time_moment_density(
    grid: Grid, T: float, data: PointwiseData, phic: np.ndarray, lam: float, e: np.ndarray
) -> np.ndarray:
    """ρ_k = ∫ (λ T L_t + T φ ψ_t + e g_t) dx at each level."""
    integrand = lam * T * data.L["t"] + T * phic * data.psi["t"] + e * data.g["t"]
    return grid.weight * np.sum(integrand, axis=1)


def solve_phi_scalar(
    spec: ProblemSpec,
    grid: Grid,
    cp: ControlPoint,
    zeta: SpaceTimeField,
    adjoint: SpaceTimeField,
    lam: float,
    e_field: SpaceTimeField,
    data: PointwiseData | None = None,
) -> np.ndarray:
    """Backward trapezoidal integration of φ' = -ρ with φ(1) = 0."""
    data = data or PointwiseData.at(spec, grid, cp.T, zeta.values, cp.v.values)
    rho = time_moment_density(grid, cp.T, data, collocated_adjoint(grid, adjoint.values), lam, e_field.values)
    phi = np.zeros(grid.levels)
    for k in range(grid.n_steps - 1, -1, -1):
        phi[k] = phi[k + 1] + 0.5 * grid.step * (rho[k] + rho[k + 1])
    return phi


def recover_e(
    spec: ProblemSpec,
    grid: Grid,
    cp: ControlPoint,
    zeta: SpaceTimeField,
    adjoint: SpaceTimeField,
    lam: float,
    act_tol: float | None = None,
    data: PointwiseData | None = None,
) -> EFieldRecovery:
    """Solve the control stationarity for e, then project onto the normal cone of [a, b] at g."""
    data = data or PointwiseData.at(spec, grid, cp.T, zeta.values, cp.v.values)
    act_tol = activity_tolerance(spec) if act_tol is None else act_tol
    active = grid.active_levels
    g_u = data.g["u"]

    weak = active[:, None] & (np.abs(g_u) < GU_FLOOR)
    if np.any(weak):
        level, node = map(int, np.argwhere(weak)[0])
        raise ConstraintQualificationError(
            f"|g_u| < {GU_FLOOR} at level {level}, node {node} (x={grid.coords[node].tolist()})"
        )

    phic = collocated_adjoint(grid, adjoint.values)
    safe_g_u = np.where(active[:, None], g_u, 1.0)
    raw = np.where(active[:, None], (cp.T * phic - lam * cp.T * data.L["u"]) / safe_g_u, 0.0)

    g = data.g["value"]
    upper = g >= spec.b - act_tol
    lower = g <= spec.a + act_tol
    e = np.where(upper, np.maximum(raw, 0.0), np.where(lower, np.minimum(raw, 0.0), 0.0))
    return EFieldRecovery(field=SpaceTimeField(e, grid, None), discarded=raw - e)


def compute_multipliers(
    spec: ProblemSpec,
    grid: Grid,
    cp: ControlPoint,
    zeta: SpaceTimeField,
    lam: float = 1.0,
    mu: np.ndarray | None = None,
    e_guess: SpaceTimeField | None = None,
    op: DiscreteOperator | None = None,
    max_sweeps: int = 50,
) -> MultiplierSet:
    """Adjoint and e are coupled through e·g_y; alternate until the e field settles."""
    op = op or operator_for(spec, grid)
    data = PointwiseData.at(spec, grid, cp.T, zeta.values, cp.v.values)
    mu = np.zeros(spec.m) if mu is None else np.asarray(mu, dtype=float)
    e = e_guess or SpaceTimeField.zeros(grid)
    coupled = bool(np.any(data.g["y"] != 0.0))

    adjoint = solve_adjoint(spec, grid, cp, zeta, lam, mu, e, op, data)
    for sweep in range(max_sweeps):
        recovered = recover_e(spec, grid, cp, zeta, adjoint, lam, data=data).field
        change = float(np.max(np.abs(recovered.values - e.values), initial=0.0))
        e = recovered
        adjoint = solve_adjoint(spec, grid, cp, zeta, lam, mu, e, op, data)
        if not coupled or change <= 1e-13 * (1.0 + e.sup_norm()):
            break
    else:
        logger.warning("Multiplier sweep did not settle after {} sweeps (last change {:.3e})", max_sweeps, change)

    phi = solve_phi_scalar(spec, grid, cp, zeta, adjoint, lam, e, data)
    return MultiplierSet(lam=float(lam), mu=mu, adjoint=adjoint, phi_scalar=phi, e_field=e)


def lagrangian_value(
    spec: ProblemSpec,
    grid: Grid,
    cp: ControlPoint,
    zeta: SpaceTimeField,
    lam: float,
    mu: np.ndarray,
    e_field: SpaceTimeField,
) -> float:
    """λĴ + Σ μ_i ψ_i + Σ_k τ_k ⟨e, g⟩ at a state that solves the scheme."""
    T, w = cp.T, grid.weight
    value = lam * (spec.terminal_cost.value(T, zeta.terminal, w) + running_integral(spec, grid, T, zeta.values, cp.v.values))
    for weight, functional in zip(mu, spec.terminal_constraints):
        value += weight * functional.value(T, zeta.terminal, w)
    g = spec.mixed_constraint("value", grid.coords, (T * grid.s)[:, None], zeta.values, cp.v.values)
    value += w * float(np.sum(grid.time_weights * np.sum(e_field.values * g, axis=1)))
    return value


def horizon_derivative(
    spec: ProblemSpec,
    grid: Grid,
    cp: ControlPoint,
    zeta: SpaceTimeField,
    adjoint: SpaceTimeField,
    lam: float,
    mu: np.ndarray,
    e_field: SpaceTimeField,
    op: DiscreteOperator | None = None,
    data: PointwiseData | None = None,
) -> float:
    """Exact T-derivative of the discrete Lagrangian value by the discrete chain rule."""
    op = op or operator_for(spec, grid)
    data = data or PointwiseData.at(spec, grid, cp.T, zeta.values, cp.v.values)
    T, w, tau = cp.T, grid.weight, grid.time_weights
    phic = collocated_adjoint(grid, adjoint.values)
    terminal = lam * spec.terminal_cost.d_T(T, zeta.terminal, w)
    for weight, functional in zip(mu, spec.terminal_constraints):
        terminal += weight * functional.d_T(T, zeta.terminal, w)
    rho = time_moment_density(grid, T, data, phic, lam, e_field.values)
    defect = state_defect(spec, grid, T, zeta.values, cp.v.values, op)
    running = w * np.sum(lam * data.L["value"] + phic * defect, axis=1)
    return terminal + float(np.sum(tau * running)) + float(np.sum(tau * grid.s * rho))


def control_gradient_density(
    grid: Grid, T: float, data: PointwiseData, adjoint: SpaceTimeField, lam: float, e_field: SpaceTimeField
) -> np.ndarray:
    """λ T L_u - T φ + e g_u on active levels, zero on the dummy level."""
    phic = collocated_adjoint(grid, adjoint.values)
    density = lam * T * data.L["u"] - T * phic + e_field.values * data.g["u"]
    return np.where(grid.active_levels[:, None], density, 0.0)


def trapezoid(values: np.ndarray, step: float) -> float:
    values = np.asarray(values, dtype=float)
    return float(step * (np.sum(values) - 0.5 * (values[0] + values[-1])))


def _stationarity_forms(
    spec: ProblemSpec,
    grid: Grid,
    cp: ControlPoint,
    zeta: SpaceTimeField,
    M: MultiplierSet,
    op: DiscreteOperator,
    data: PointwiseData,
) -> dict[str, float]:
    """The two printed versions of T-stationarity, each evaluated with trapezoidal time quadrature."""
    T, w = cp.T, grid.weight
    phic = collocated_adjoint(grid, M.adjoint.values)
    defect = state_defect(spec, grid, T, zeta.values, cp.v.values, op)
    bulk = trapezoid(w * np.sum(M.lam * data.L["value"] + phic * defect, axis=1), grid.step)
    phi_integral = trapezoid(M.phi_scalar, grid.step)

    partial_T = M.lam * spec.terminal_cost.d_T(T, zeta.terminal, w)
    partial_zeta = M.lam * w * float(np.sum(spec.terminal_cost.d_zeta(T, zeta.terminal)))
    for weight, functional in zip(M.mu, spec.terminal_constraints):
        partial_T += weight * functional.d_T(T, zeta.terminal, w)
        partial_zeta += weight * w * float(np.sum(functional.d_zeta(T, zeta.terminal)))

    # physical integrals carry a factor T from dt = T ds; the literal form is divided through by T
    return {
        "reduced_form": phi_integral + bulk + partial_T,
        "physical_literal_form_over_T": phi_integral + bulk + partial_zeta,
    }


def _lagrangian_in_T(
    spec: ProblemSpec, grid: Grid, cp: ControlPoint, M: MultiplierSet, T: float, op: DiscreteOperator
) -> float:
    shifted = ControlPoint(T=T, v=cp.v)
    return lagrangian_value(spec, grid, shifted, reduced_state(spec, grid, shifted, op), M.lam, M.mu, M.e_field)


def horizon_fd_check(
    spec: ProblemSpec, grid: Grid, cp: ControlPoint, M: MultiplierSet, exact: float, op: DiscreteOperator
) -> dict[str, float]:
    best_step, best_fd, best_err = FD_STEPS[0], 0.0, np.inf
    for step in FD_STEPS:
        h = min(step, 0.5 * cp.T)
        fd = (_lagrangian_in_T(spec, grid, cp, M, cp.T + h, op) - _lagrangian_in_T(spec, grid, cp, M, cp.T - h, op)) / (2 * h)
        err = abs(fd - exact) / max(abs(exact), abs(fd), 1e-12)
        if err < best_err:
            best_step, best_fd, best_err = h, fd, err
    return {"dT_fd": best_fd, "fd_step": best_step, "fd_relative_error": float(best_err)}


def _normal_cone_violation(spec: ProblemSpec, grid: Grid, g: np.ndarray, e: np.ndarray, act_tol: float) -> float:
    upper = g >= spec.b - act_tol
    lower = g <= spec.a + act_tol
    violation = np.where(upper, np.maximum(-e, 0.0), np.where(lower, np.maximum(e, 0.0), np.abs(e)))
    violation = np.where(upper & lower, 0.0, violation)
    return float(np.max(violation[grid.active_levels], initial=0.0))


def kkt_residuals(
    spec: ProblemSpec,
    grid: Grid,
    cp: ControlPoint,
    zeta: SpaceTimeField,
    M: MultiplierSet,
    op: DiscreteOperator | None = None,
    with_fd: bool = True,
) -> KKTReport:
    """First-order residuals at (T, v) with multipliers M.

    r_T is the projected horizon residual |T - clip(T - dT, T_lo, T_hi)|. It equals |dT| when the
    gradient step stays inside the bracket and is zero for a fixed horizon.
    """
    op = op or operator_for(spec, grid)
    data = PointwiseData.at(spec, grid, cp.T, zeta.values, cp.v.values)
    act_tol = activity_tolerance(spec)
    active = grid.active_levels

    density = control_gradient_density(grid, cp.T, data, M.adjoint, M.lam, M.e_field)
    r_u = float(np.max(np.abs(density[active]), initial=0.0))

    dT = horizon_derivative(spec, grid, cp, zeta, M.adjoint, M.lam, M.mu, M.e_field, op, data)
    r_T = abs(cp.T - float(np.clip(cp.T - dT, spec.T_lo, spec.T_hi)))

    psi_values = np.array([f.value(cp.T, zeta.terminal, grid.weight) for f in spec.terminal_constraints])
    complementarity = float(np.max(np.abs(M.mu * psi_values), initial=0.0))
    sign = _normal_cone_violation(spec, grid, data.g["value"], M.e_field.values, act_tol)
    r_comp = complementarity + sign + float(np.max(np.maximum(-M.mu, 0.0), initial=0.0))

    g = data.g["value"][active]
    bound_violation = float(np.max(np.maximum(np.maximum(spec.a - g, g - spec.b), 0.0), initial=0.0))
    terminal_violation = float(np.max(np.maximum(psi_values, 0.0), initial=0.0))
    bracket_violation = max(spec.T_lo - cp.T, cp.T - spec.T_hi, 0.0)
    r_feas = max(bound_violation, terminal_violation, bracket_violation)

    r_adj = adjoint_residual(spec, grid, cp, zeta, M, op, data)
    phi_check = solve_phi_scalar(spec, grid, cp, zeta, M.adjoint, M.lam, M.e_field, data)
    r_phi = float(np.max(np.abs(phi_check - M.phi_scalar), initial=0.0)) + abs(float(M.phi_scalar[-1]))

    crosschecks: dict[str, Any] = {"dT_exact": dT}
    forms = _stationarity_forms(spec, grid, cp, zeta, M, op, data)
    crosschecks.update(forms)
    crosschecks["trapezoid_vs_exact"] = forms["reduced_form"] - dT
    if with_fd:
        fd = horizon_fd_check(spec, grid, cp, M, dT, op)
        crosschecks.update(fd)
        scale = max(abs(fd["dT_fd"]), 1e-8)
        crosschecks["matches"] = [
            name for name in ("reduced_form", "physical_literal_form_over_T") if abs(forms[name] - fd["dT_fd"]) <= 1e-3 * scale + 1e-8
        ]

    report = KKTReport(
        r_u=r_u, r_T=r_T, r_comp=r_comp, r_feas=r_feas, r_adj=r_adj, r_phi=r_phi, dT=dT, fd_crosschecks=crosschecks
    )
    logger.debug("KKT residuals: {}", {k: v for k, v in report.to_dict().items() if k.startswith("r_")})
    return report


def transport_multipliers(M: MultiplierSet, T: float) -> MultiplierSet:
    """Physical-coordinate multipliers: φ̃ and φ̃_s keep their level values, ẽ = e / T."""
    return MultiplierSet(
        lam=M.lam,
        mu=M.mu.copy(),
        adjoint=SpaceTimeField(M.adjoint.values.copy(), M.adjoint.grid, T),
        phi_scalar=M.phi_scalar.copy(),
        e_field=SpaceTimeField(M.e_field.values / T, M.e_field.grid, T),
    )


def physical_residuals(
    spec: ProblemSpec,
    grid: Grid,
    T: float,
    y: SpaceTimeField,
    u: SpaceTimeField,
    M_phys: MultiplierSet,
    op: DiscreteOperator | None = None,
) -> dict[str, float]:
    """Residuals of the free-horizon optimality system on the physical grid t_k = T·s_k, weights T·τ_k."""
    op = op or operator_for(spec, grid)
    data = PointwiseData.at(spec, grid, T, y.values, u.values)
    active = grid.active_levels
    phic = collocated_adjoint(grid, M_phys.adjoint.values)
    e = M_phys.e_field.values

    stationarity = M_phys.lam * data.L["u"] - phic + e * data.g["u"]
    r_u = float(np.max(np.abs(stationarity[active]), initial=0.0))

    h, theta, weights = T * grid.step, grid.theta, T * grid.time_weights
    q = M_phys.adjoint.values
    source = M_phys.lam * data.L["y"] + e * data.g["y"]
    r_adj = float(np.max(np.abs(q[-1] - terminal_adjoint(spec, T, y.terminal, M_phys.lam, M_phys.mu)), initial=0.0))
    for k in range(grid.n_steps, 0, -1):
        carried = q[k] if k == grid.n_steps else explicit_matrix(op, h, theta, data.psi["y"][k]) @ q[k]
        lhs = implicit_matrix(op, h, theta, data.psi["y"][k]) @ q[k - 1]
        r_adj = max(r_adj, float(np.max(np.abs(lhs - carried + weights[k] * source[k]), initial=0.0)))

    rho = grid.weight * np.sum(M_phys.lam * data.L["t"] + phic * data.psi["t"] + e * data.g["t"], axis=1)
    phi = np.zeros(grid.levels)
    for k in range(grid.n_steps - 1, -1, -1):
        phi[k] = phi[k + 1] + 0.5 * h * (rho[k] + rho[k + 1])
    r_phi = float(np.max(np.abs(phi - M_phys.phi_scalar), initial=0.0))

    sign = _normal_cone_violation(spec, grid, data.g["value"], e, activity_tolerance(spec))
    return {"r_u": r_u, "r_adj": r_adj, "r_phi": r_phi, "r_sign": sign}


def transport_consistency(
    spec: ProblemSpec,
    grid: Grid,
    cp: ControlPoint,
    zeta: SpaceTimeField,
    M: MultiplierSet,
    report: KKTReport,
    op: DiscreteOperator | None = None,
) -> dict[str, float]:
    """Compare reduced residuals with the physical ones of the transported multipliers (r_u scales by T)."""
    physical = physical_residuals(
        spec,
        grid,
        cp.T,
        SpaceTimeField(zeta.values, grid, cp.T),
        SpaceTimeField(cp.v.values, grid, cp.T),
        transport_multipliers(M, cp.T),
        op,
    )
    reduced_phi = solve_phi_scalar(spec, grid, cp, zeta, M.adjoint, M.lam, M.e_field)
    return {
        "r_u_physical_times_T": physical["r_u"] * cp.T,
        "r_u_reduced": report.r_u,
        "r_u_discrepancy": abs(physical["r_u"] * cp.T - report.r_u),
        "r_adj_discrepancy": abs(physical["r_adj"] - report.r_adj),
        "r_phi_discrepancy": abs(physical["r_phi"] - float(np.max(np.abs(reduced_phi - M.phi_scalar), initial=0.0))),
    }
