"""Projected-gradient and augmented-Lagrangian solver for the reduced problem over (T, v)."""

from dataclasses import dataclass, field
from enum import Enum
from typing import Any

import numpy as np
from loguru import logger
from scipy.linalg import cholesky, solve_triangular
from scipy.optimize import lsq_linear

from src.core.evaluator import BatchEvaluator
from src.core.optimality import (
    KKTReport,
    MultiplierSet,
    PointwiseData,
    compute_multipliers,
    control_gradient_density,
    horizon_derivative,
    kkt_residuals,
    solve_adjoint,
)
from src.discretization.grid import Grid
from src.discretization.operator import DiscreteOperator
from src.problem.catalog import CatalogKind, Slot, sine_profile
from src.problem.spec import ProblemSpec
from src.schemas.scenario import SolverConfig, SolverMode
from src.solvers.fields import SpaceTimeField
from src.solvers.reduction import ControlPoint, definition_distance, from_reduced, objective_reduced, reduced_state
from src.solvers.state import StateSolveError, march_linearized, operator_for


class Termination(str, Enum):
    CONVERGED = "converged"
    MAX_ITERS = "max_iters"
    LINE_SEARCH_FAILED = "line_search_failed"


@dataclass(slots=True)
class IterationRecord:
    iteration: int
    outer: int
    merit: float
    objective: float
    T: float
    projected_gradient: float
    step: float
    penalty: float
    violation: float


@dataclass(slots=True)
class SolveResult:
    cp: ControlPoint
    state: SpaceTimeField
    multipliers: MultiplierSet
    kkt: KKTReport
    trace: list[IterationRecord]
    termination: Termination
    mode: SolverMode
    objective: float
    initial: dict[str, float] = field(default_factory=dict)

    @property
    def converged(self) -> bool:
        return self.termination is Termination.CONVERGED

    def to_dict(self) -> dict[str, Any]:
        return {
            "T": self.cp.T,
            "objective": self.objective,
            "termination": self.termination.value,
            "mode": self.mode.value,
            "iterations": len(self.trace),
            "initial": self.initial,
            "multipliers": self.multipliers.to_dict(),
            "kkt": self.kkt.to_dict(),
            "trace": [
                {
                    "iteration": r.iteration,
                    "outer": r.outer,
                    "merit": r.merit,
                    "objective": r.objective,
                    "T": r.T,
                    "projected_gradient": r.projected_gradient,
                    "step": r.step,
                    "penalty": r.penalty,
                    "violation": r.violation,
                }
                for r in self.trace
            ],
        }


def project_box(v: np.ndarray, a: float, b: float) -> np.ndarray:
    if not a < b:
        raise ValueError(f"box requires a < b, got a={a}, b={b}")
    return np.clip(v, a, b)


def gradient(
    spec: ProblemSpec, grid: Grid, cp: ControlPoint, op: DiscreteOperator | None = None
) -> tuple[float, SpaceTimeField]:
    """Exact gradient of the discrete reduced objective.

    Returns dT and the control density dv = T L_u - T φ; the Euclidean gradient in v is τ_k·w·dv.
    """
    op = op or operator_for(spec, grid)
    zeta = reduced_state(spec, grid, cp, op)
    data = PointwiseData.at(spec, grid, cp.T, zeta.values, cp.v.values)
    zero_e = SpaceTimeField.zeros(grid)
    mu = np.zeros(spec.m)
    adjoint = solve_adjoint(spec, grid, cp, zeta, 1.0, mu, zero_e, op, data)
    dT = horizon_derivative(spec, grid, cp, zeta, adjoint, 1.0, mu, zero_e, op, data)
    density = control_gradient_density(grid, cp.T, data, adjoint, 1.0, zero_e)
    return dT, SpaceTimeField(density, grid, None)


@dataclass(slots=True)
class _Evaluation:
    T: float
    v: np.ndarray
    merit: float
    objective: float = np.inf
    zeta: SpaceTimeField | None = None
    dT: float = 0.0
    density: np.ndarray | None = None
    mu_hat: np.ndarray | None = None
    e_hat: np.ndarray | None = None
    psi: np.ndarray | None = None
    g: np.ndarray | None = None


class ReducedProblemSolver:
    """Drives (T, v) to a KKT point of the reduced problem.

    Projected gradient handles g = u without terminal constraints; otherwise an augmented
    Lagrangian wraps the same projected spectral-gradient inner loop.
    """

    def __init__(self, spec: ProblemSpec, grid: Grid, config: SolverConfig, op: DiscreteOperator | None = None):
        self.spec = spec
        self.grid = grid
        self.config = config
        self.op = op or operator_for(spec, grid)
        self.weights = grid.time_weights[:, None] * grid.weight
        self.active = grid.active_levels
        if config.mode is SolverMode.AUTO:
            self.mode = (
                SolverMode.PROJECTED_GRADIENT
                if spec.g_is_identity and spec.m == 0
                else SolverMode.AUGMENTED_LAGRANGIAN
            )
        else:
            self.mode = config.mode
        if self.mode is SolverMode.PROJECTED_GRADIENT and (spec.m > 0 or not spec.g_is_identity):
            raise ValueError("projected-gradient mode needs g = u and no terminal constraints")
        self.field_penalty = not spec.g_is_identity

    def initial_point(self) -> ControlPoint:
        # [a, b] bounds g, not u, unless g = u
        mid = 0.5 * (self.spec.a + self.spec.b) if self.spec.g_is_identity else 0.0
        T0 = 0.5 * (self.spec.T_lo + self.spec.T_hi)
        return ControlPoint(T=T0, v=SpaceTimeField.constant(self.grid, mid))

    def _project(self, T: float, v: np.ndarray) -> tuple[float, np.ndarray]:
        T = float(np.clip(T, self.spec.T_lo, self.spec.T_hi))
        if not self.field_penalty:
            v = project_box(v, self.spec.a, self.spec.b)
        return T, v

    def _evaluate(self, T: float, v: np.ndarray, mu: np.ndarray, e: np.ndarray, rho: float) -> _Evaluation:
        spec, grid = self.spec, self.grid
        cp = ControlPoint(T=T, v=SpaceTimeField(v, grid, None))
        try:
            zeta = reduced_state(spec, grid, cp, self.op)
        except StateSolveError as exc:
            logger.debug("State solve failed during line search: {}", exc)
            return _Evaluation(T=T, v=v, merit=np.inf)

        data = PointwiseData.at(spec, grid, T, zeta.values, v)
        objective = objective_reduced(spec, grid, cp, zeta)
        merit = objective

        psi = np.array([f.value(T, zeta.terminal, grid.weight) for f in spec.terminal_constraints])
        mu_hat = np.maximum(0.0, mu + rho * psi)
        if spec.m:
            merit += float(np.sum(mu_hat**2 - mu**2)) / (2.0 * rho)

        e_hat = np.zeros_like(v)
        if self.field_penalty:
            g = data.g["value"]
            upper = np.maximum(0.0, e + rho * (g - spec.b))
            lower = np.minimum(0.0, e + rho * (g - spec.a))
            penalty = (upper**2 + lower**2 - e**2) / (2.0 * rho)
            merit += float(np.sum(self.weights * penalty))
            e_hat = np.where(self.active[:, None], upper + lower, 0.0)

        if not np.isfinite(merit):
            return _Evaluation(T=T, v=v, merit=np.inf)
        e_field = SpaceTimeField(e_hat, grid, None)
        adjoint = solve_adjoint(spec, grid, cp, zeta, 1.0, mu_hat, e_field, self.op, data)
        dT = horizon_derivative(spec, grid, cp, zeta, adjoint, 1.0, mu_hat, e_field, self.op, data)
        density = control_gradient_density(grid, T, data, adjoint, 1.0, e_field)
        return _Evaluation(
            T=T,
            v=v,
            merit=merit,
            objective=objective,
            zeta=zeta,
            dT=dT,
            density=density,
            mu_hat=mu_hat,
            e_hat=e_hat,
            psi=psi,
            g=data.g["value"],
        )

    def _projected_gradient(self, ev: _Evaluation) -> float:
        T_next, v_next = self._project(ev.T - ev.dT, ev.v - ev.density)
        r_T = abs(ev.T - T_next)
        r_v = float(np.max(np.abs((ev.v - v_next)[self.active]), initial=0.0))
        return max(r_T, r_v)

    def _metric(self, dT: float, dv: np.ndarray, gT: float, gv: np.ndarray) -> float:
        return dT * gT + float(np.sum(self.weights * dv * gv))

    def _inner(
        self,
        ev: _Evaluation,
        mu: np.ndarray,
        e: np.ndarray,
        rho: float,
        tol: float,
        budget: int,
        outer: int,
        trace: list[IterationRecord],
        violation: float,
    ) -> tuple[_Evaluation, str]:
        cfg = self.config
        alpha = cfg.initial_step
        previous: _Evaluation | None = None
        for _ in range(budget):
            pg = self._projected_gradient(ev)
            trace.append(
                IterationRecord(
                    iteration=len(trace),
                    outer=outer,
                    merit=ev.merit,
                    objective=ev.objective,
                    T=ev.T,
                    projected_gradient=pg,
                    step=alpha,
                    penalty=rho,
                    violation=violation,
                )
            )
            if pg <= tol:
                return ev, "stationary"

            if previous is not None:
                sT, sv = ev.T - previous.T, ev.v - previous.v
                yT, yv = ev.dT - previous.dT, ev.density - previous.density
                curvature = self._metric(sT, sv, yT, yv)
                if curvature > 0.0:
                    alpha = float(np.clip(self._metric(sT, sv, sT, sv) / curvature, 1e-10, 1e10))
                else:
                    alpha = cfg.initial_step

            step = alpha
            while True:
                T_trial, v_trial = self._project(ev.T - step * ev.dT, ev.v - step * ev.density)
                v_trial = np.where(self.active[:, None], v_trial, ev.v)
                decrease = ev.dT * (T_trial - ev.T) + float(np.sum(self.weights * ev.density * (v_trial - ev.v)))
                trial = self._evaluate(T_trial, v_trial, mu, e, rho)
                if trial.merit <= ev.merit + cfg.armijo_c1 * decrease:
                    break
                step *= cfg.shrink
                if step < cfg.min_step:
                    logger.warning("Line search failed at iteration {} (pg={:.3e})", len(trace), pg)
                    return ev, "line_search_failed"
            previous, ev = ev, trial
            alpha = step
        return ev, "budget"

    def _violation(self, ev: _Evaluation, mu: np.ndarray, e: np.ndarray, rho: float) -> float:
        worst = 0.0
        if self.spec.m:
            worst = float(np.max(np.abs(np.minimum(-ev.psi, mu / rho))))
        if self.field_penalty:
            g = ev.g[self.active]
            slack = np.maximum(np.maximum(self.spec.a - g, g - self.spec.b), 0.0)
            worst = max(worst, float(np.max(slack, initial=0.0)))
        return worst

    def solve(self, initial: ControlPoint | None = None) -> SolveResult:
        cfg, spec, grid = self.config, self.spec, self.grid
        initial = initial or self.initial_point()
        initial.check_bracket(spec)
        logger.info(
            "Solving reduced problem: mode={} T0={} levels={} nodes={}",
            self.mode.value,
            initial.T,
            grid.levels,
            grid.n_interior,
        )

        mu = np.zeros(spec.m)
        e = np.zeros((grid.levels, grid.n_interior))
        rho = cfg.penalty_init
        T0, v0 = self._project(initial.T, initial.v.values.copy())
        ev = self._evaluate(T0, v0, mu, e, rho)
        if not np.isfinite(ev.merit):
            raise StateSolveError("state solve failed at the initial point")

        trace: list[IterationRecord] = []
        termination = Termination.MAX_ITERS
        previous_violation = np.inf
        violation = 0.0
        inner_tol = max(cfg.grad_tol, 1e-3) if self.mode is SolverMode.AUGMENTED_LAGRANGIAN else cfg.grad_tol
        outer_cap = cfg.max_outer if self.mode is SolverMode.AUGMENTED_LAGRANGIAN else 1

        report: KKTReport | None = None
        multipliers: MultiplierSet | None = None
        for outer in range(outer_cap):
            budget = cfg.max_iters - len(trace)
            if budget <= 0:
                break
            while True:
                ev, status = self._inner(ev, mu, e, rho, inner_tol, cfg.max_iters - len(trace), outer, trace, violation)
                if status != "stationary" or self.mode is SolverMode.AUGMENTED_LAGRANGIAN:
                    break
                multipliers, report = self._certify(ev, mu, e)
                if report.passes(cfg.grad_tol, cfg.feas_tol):
                    termination = Termination.CONVERGED
                    break
                if len(trace) >= cfg.max_iters:
                    break
                inner_tol = 0.1 * inner_tol
            if status == "line_search_failed":
                termination = Termination.LINE_SEARCH_FAILED
                break
            if self.mode is SolverMode.PROJECTED_GRADIENT:
                break

            violation = self._violation(ev, mu, e, rho)
            mu = ev.mu_hat.copy()
            if self.field_penalty:
                e = ev.e_hat.copy()
            logger.debug("Outer {}: violation={:.3e} rho={:.1e} mu={}", outer, violation, rho, mu.tolist())
            if status == "stationary" and inner_tol <= cfg.grad_tol and violation <= cfg.feas_tol:
                multipliers, report = self._certify(ev, mu, e)
                if report.passes(cfg.grad_tol, cfg.feas_tol):
                    termination = Termination.CONVERGED
                    break
            if violation > 0.25 * previous_violation:
                rho = min(rho * cfg.penalty_growth, cfg.penalty_max)
            previous_violation = violation
            inner_tol = max(cfg.grad_tol, 0.1 * inner_tol)
            ev = self._evaluate(ev.T, ev.v, mu, e, rho)

        if report is None or termination is not Termination.CONVERGED:
            multipliers, report = self._certify(ev, mu, e)
        cp = ControlPoint(T=ev.T, v=SpaceTimeField(ev.v, grid, None))
        logger.info(
            "Finished: termination={} T={:.12g} objective={:.12g} iterations={}",
            termination.value,
            cp.T,
            ev.objective,
            len(trace),
        )
        return SolveResult(
            cp=cp,
            state=ev.zeta,
            multipliers=multipliers,
            kkt=report,
            trace=trace,
            termination=termination,
            mode=self.mode,
            objective=ev.objective,
            initial={"T": initial.T, "v_mean": float(np.mean(initial.v.values))},
        )

    def _certify(self, ev: _Evaluation, mu: np.ndarray, e: np.ndarray) -> tuple[MultiplierSet, KKTReport]:
        cp = ControlPoint(T=ev.T, v=SpaceTimeField(ev.v, self.grid, None))
        e_guess = SpaceTimeField(ev.e_hat, self.grid, None) if self.field_penalty else None
        multipliers = compute_multipliers(self.spec, self.grid, cp, ev.zeta, 1.0, mu, e_guess, self.op)
        report = kkt_residuals(self.spec, self.grid, cp, ev.zeta, multipliers, self.op, with_fd=False)
        return multipliers, report


def solve(
    spec: ProblemSpec, grid: Grid, config: SolverConfig, initial: ControlPoint | None = None
) -> SolveResult:
    return ReducedProblemSolver(spec, grid, config).solve(initial)


def dense_qp_oracle(spec: ProblemSpec, grid: Grid, T: float) -> np.ndarray:
    """Fixed-T tracking problem with box on u solved as a dense bounded least-squares problem.

    Independent of the adjoint machinery: the affine control-to-state map is assembled column by
    column and the quadratic cost is written out explicitly.
    """
    cost = spec.entry_for(Slot.RUNNING_COST)
    nonlinearity = spec.entry_for(Slot.NONLINEARITY)
    terminal = spec.entry_for(Slot.TERMINAL_COST)
    if cost.kind is not CatalogKind.COST_TRACKING_QUADRATIC or not spec.g_is_identity or spec.m:
        raise ValueError("oracle supports tracking costs with g = u and no terminal constraints")
    if nonlinearity.kind not in (CatalogKind.PSI_ZERO, CatalogKind.PSI_LINEAR):
        raise ValueError("oracle needs a state equation that is affine in the control")

    op = operator_for(spec, grid)
    n, levels = grid.n_interior, grid.levels
    times = T * grid.s
    c_psi = spec.psi("y", grid.coords, times[:, None], np.zeros((levels, n)))
    free = np.flatnonzero(np.repeat(grid.active_levels, n))

    base = march_linearized(op, grid, T, c_psi, np.zeros((levels, n)), spec.y0(grid.coords))
    columns = np.empty((levels * n, free.size))
    for j, index in enumerate(free):
        unit = np.zeros(levels * n)
        unit[index] = 1.0
        columns[:, j] = march_linearized(op, grid, T, c_psi, unit.reshape(levels, n), np.zeros(n)).ravel()

    alpha, beta, u_d = cost.param("alpha"), cost.param("beta"), cost.param("control_target")
    target = cost.param("target_amplitude") * np.outer(
        np.exp(-cost.param("target_decay") * times), sine_profile(grid.coords, grid.extent)
    )
    w = grid.weight
    tau = np.repeat(grid.time_weights, n)
    state_weight = T * w * alpha * tau
    control_weight = T * w * beta * tau[free]

    hessian = columns.T @ (state_weight[:, None] * columns) + np.diag(control_weight)
    linear = columns.T @ (state_weight * (base.ravel() - target.ravel())) - control_weight * u_d
    if terminal is not None and terminal.kind is CatalogKind.TERMINAL_TIME_ENERGY:
        sigma = terminal.param("state_weight")
        final = columns[(levels - 1) * n :, :]
        hessian = hessian + sigma * w * final.T @ final
        linear = linear + sigma * w * final.T @ base[-1]

    upper = cholesky(hessian, lower=False)
    rhs = -solve_triangular(upper.T, linear, lower=True)
    solution = lsq_linear(upper, rhs, bounds=(spec.a, spec.b), method="bvls", tol=1e-15)
    v = np.full(levels * n, 0.5 * (spec.a + spec.b))
    v[free] = solution.x
    return v.reshape(levels, n)


@dataclass(slots=True)
class ProbeOutcome:
    status: str
    ratio: float | None = None
    distance: float | None = None


@dataclass(slots=True)
class GrowthReport:
    radius: float
    seed: int
    kappa_hat: float | None
    accepted: int
    discarded_infeasible: int
    discarded_outside_radius: int
    excluded_zero: int
    failed: int
    ratios: list[float] = field(default_factory=list)
    probes: list[dict[str, Any]] = field(default_factory=list)

    @property
    def flagged(self) -> bool:
        return self.kappa_hat is None or self.kappa_hat <= 0.0

    def to_dict(self) -> dict[str, Any]:
        return {
            "radius": self.radius,
            "seed": self.seed,
            "kappa_hat": self.kappa_hat,
            "flagged": self.flagged,
            "accepted": self.accepted,
            "discarded_infeasible": self.discarded_infeasible,
            "discarded_outside_radius": self.discarded_outside_radius,
            "excluded_zero": self.excluded_zero,
            "failed": self.failed,
            "ratios": self.ratios,
        }


def growth_certificate(
    spec: ProblemSpec,
    grid: Grid,
    result: SolveResult,
    radius: float,
    n_probes: int,
    seed: int = 42,
    feas_tol: float = 0.0,
    evaluator: BatchEvaluator | None = None,
) -> GrowthReport:
    """Empirical quadratic-growth constant over random feasible perturbations of (T*, v*)."""
    if radius <= 0.0:
        raise ValueError(f"radius must be positive, got {radius}")
    if not result.converged:
        logger.warning("Growth certificate requested for a non-converged result ({})", result.termination.value)
    op = operator_for(spec, grid)
    cp_star, zeta_star = result.cp, result.state
    J_star = result.objective
    active = grid.active_levels
    weights = grid.time_weights[:, None] * grid.weight
    y_star = from_reduced(zeta_star, cp_star.T)
    u_star = from_reduced(cp_star.v, cp_star.T)

    rng = np.random.default_rng(seed)
    probes: list[tuple[float, np.ndarray]] = []
    for _ in range(n_probes):
        dT = 0.0 if spec.horizon_fixed else rng.uniform(-radius / 4.0, radius / 4.0)
        raw = rng.standard_normal(cp_star.v.values.shape)
        raw[~active] = 0.0
        scale = rng.uniform(0.0, radius / 4.0)
        dv = raw * (scale / max(float(np.max(np.abs(raw))), 1e-300))
        T = float(np.clip(cp_star.T + dT, spec.T_lo, spec.T_hi))
        v = cp_star.v.values + dv
        if spec.g_is_identity:
            v = project_box(v, spec.a, spec.b)
        probes.append((T, v))

    def evaluate(probe: tuple[float, np.ndarray]) -> ProbeOutcome:
        T, v = probe
        cp = ControlPoint(T=T, v=SpaceTimeField(v, grid, None))
        denominator = (T - cp_star.T) ** 2 + float(np.sum(weights * (v - cp_star.v.values) ** 2))
        if denominator == 0.0:
            return ProbeOutcome("zero")
        zeta = reduced_state(spec, grid, cp, op)
        psi = [f.value(T, zeta.terminal, grid.weight) for f in spec.terminal_constraints]
        g = spec.mixed_constraint("value", grid.coords, (T * grid.s)[:, None], zeta.values, v)[active]
        if any(p > feas_tol for p in psi) or np.any(g < spec.a - feas_tol) or np.any(g > spec.b + feas_tol):
            return ProbeOutcome("infeasible")
        distance = definition_distance(
            cp_star.T, y_star, u_star, T, from_reduced(zeta, T), from_reduced(cp.v, T)
        )
        if distance > radius:
            return ProbeOutcome("outside", distance=distance)
        return ProbeOutcome("accepted", ratio=(objective_reduced(spec, grid, cp, zeta) - J_star) / denominator, distance=distance)

    outcomes = (evaluator or BatchEvaluator()).map(evaluate, probes, label="growth probe")
    ratios = [o.value.ratio for o in outcomes if o.ok and o.value.status == "accepted"]
    counts = {status: sum(1 for o in outcomes if o.ok and o.value.status == status) for status in ("infeasible", "outside", "zero")}
    report = GrowthReport(
        radius=radius,
        seed=seed,
        kappa_hat=min(ratios) if ratios else None,
        accepted=len(ratios),
        discarded_infeasible=counts["infeasible"],
        discarded_outside_radius=counts["outside"],
        excluded_zero=counts["zero"],
        failed=sum(1 for o in outcomes if not o.ok),
        ratios=ratios,
        probes=[
            {
                "probe": index,
                "T": probe[0],
                "status": outcome.value.status if outcome.ok else "failed",
                "ratio": outcome.value.ratio if outcome.ok else None,
                "distance": outcome.value.distance if outcome.ok else None,
            }
            for index, (probe, outcome) in enumerate(zip(probes, outcomes, strict=True))
        ],
    )
    if report.flagged:
        logger.warning("Growth certificate flagged: kappa_hat={}", report.kappa_hat)
    return report
