"""Second-order analysis at a first-order point: quadratic form, critical-cone sampling, Legendre-Clebsch margin."""

from dataclasses import dataclass, field
from typing import Any

import numpy as np
from loguru import logger

from src.core.evaluator import BatchEvaluator
from src.core.optimality import (
    MultiplierSet,
    PointwiseData,
    activity_tolerance,
    collocated_adjoint,
    control_gradient_density,
    horizon_derivative,
    lagrangian_value,
    solve_adjoint,
)
from src.core.optimizer import SolveResult
from src.core.reporting import summarize_samples
from src.discretization.grid import Grid
from src.discretization.operator import DiscreteOperator
from src.problem.spec import ProblemSpec
from src.schemas.scenario import SOCConfig
from src.solvers.fields import SpaceTimeField
from src.solvers.reduction import (
    ControlPoint,
    PhysicalDirection,
    ReducedDirection,
    direction_state,
    state_defect,
)
from src.solvers.state import operator_for
from src.utils.finite_difference import FDMatch, directional_curvature

SECOND_DIFFERENCE_STEPS = (1e-2, 1e-3, 1e-4)


def _hessian_form(d: dict[str, np.ndarray], xi: np.ndarray, zh: np.ndarray, vh: np.ndarray) -> np.ndarray:
    return (
        d["tt"] * xi**2
        + d["yy"] * zh**2
        + d["uu"] * vh**2
        + 2.0 * (d["ty"] * xi * zh + d["tu"] * xi * vh + d["yu"] * zh * vh)
    )


@dataclass(slots=True)
class LinearFunctional:
    name: str
    grad_T: float
    grad_v: np.ndarray
    equality: bool

    def __call__(self, T_hat: float, v_hat: np.ndarray) -> float:
        return self.grad_T * T_hat + float(np.sum(self.grad_v * v_hat))

    @property
    def scale(self) -> float:
        return max(1.0, float(np.sqrt(self.grad_T**2 + np.sum(self.grad_v**2))))


@dataclass(slots=True)
class ConeSample:
    direction: ReducedDirection | None
    q_value: float | None
    residual: float
    rounds: int
    accepted: bool


@dataclass(slots=True)
class LegendreClebsch:
    margin: SpaceTimeField
    infimum: float
    infimum_free: float
    normalized: float

    def to_dict(self) -> dict[str, Any]:
        return {"Lambda_hat": self.infimum, "Lambda_hat_free_nodes": self.infimum_free, "Lambda_0": self.normalized}


@dataclass(slots=True)
class SOCReport:
    samples_requested: int
    accepted: int
    rejected: int
    failed: int
    seed: int
    q_min: float | None
    q_summary: dict[str, Any]
    necessary: bool
    sufficient: bool
    cone_trivial: bool
    legendre: LegendreClebsch
    interpretation: dict[str, str] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "samples_requested": self.samples_requested,
            "accepted": self.accepted,
            "rejected": self.rejected,
            "failed": self.failed,
            "seed": self.seed,
            "q_min": self.q_min,
            "q_summary": self.q_summary,
            "necessary_holds": self.necessary,
            "sufficient_holds": self.sufficient,
            "cone_trivial": self.cone_trivial,
            "legendre_clebsch": self.legendre.to_dict(),
            "interpretation": self.interpretation,
            "note": "critical-cone sampling gives numerical evidence, not a proof",
        }


class SecondOrderAnalyzer:
    """Second variation of the discrete Lagrangian at (T*, v*) with fixed multipliers."""

    def __init__(
        self,
        spec: ProblemSpec,
        grid: Grid,
        cp: ControlPoint,
        zeta: SpaceTimeField,
        multipliers: MultiplierSet,
        op: DiscreteOperator | None = None,
    ):
        self.spec = spec
        self.grid = grid
        self.cp = cp
        self.zeta = zeta
        self.M = multipliers
        self.op = op or operator_for(spec, grid)
        self.data = PointwiseData.at(spec, grid, cp.T, zeta.values, cp.v.values)
        self.phic = collocated_adjoint(grid, multipliers.adjoint.values)
        self.weights = grid.time_weights[:, None] * grid.weight
        self.active = np.broadcast_to(grid.active_levels[:, None], cp.v.values.shape)
        self._classify()

    @classmethod
    def from_result(cls, spec: ProblemSpec, grid: Grid, result: SolveResult) -> "SecondOrderAnalyzer":
        return cls(spec, grid, result.cp, result.state, result.multipliers)

    def _classify(self) -> None:
        spec, e = self.spec, self.M.e_field.values
        act_tol = activity_tolerance(spec)
        g = self.data.g["value"]
        upper = self.active & (g >= spec.b - act_tol)
        lower = self.active & (g <= spec.a + act_tol)
        threshold = 1e-8 * max(1.0, float(np.max(np.abs(e), initial=0.0)))
        self.strong = (upper | lower) & (np.abs(e) > threshold)
        self.weak_upper = upper & ~self.strong
        self.weak_lower = lower & ~self.strong
        self.free_nodes = self.active & ~self.strong

        zero_e = SpaceTimeField.zeros(self.grid)
        self.dT_lagrangian = horizon_derivative(
            spec, self.grid, self.cp, self.zeta, self.M.adjoint, self.M.lam, self.M.mu, self.M.e_field, self.op, self.data
        )
        span = max(1.0, spec.T_hi - spec.T_lo)
        self.T_fixed = spec.horizon_fixed
        self.T_at_lo = not self.T_fixed and self.cp.T - spec.T_lo <= 1e-8 * span
        self.T_at_hi = not self.T_fixed and spec.T_hi - self.cp.T <= 1e-8 * span
        self.T_pinned = self.T_fixed or ((self.T_at_lo or self.T_at_hi) and abs(self.dT_lagrangian) > 1e-8)

        self.functionals = [self._functional("objective", 1.0, np.zeros(spec.m), zero_e, equality=False)]
        for i, constraint in enumerate(spec.terminal_constraints):
            value = constraint.value(self.cp.T, self.zeta.terminal, self.grid.weight)
            if abs(value) > act_tol:
                continue
            unit = np.zeros(spec.m)
            unit[i] = 1.0
            self.functionals.append(
                self._functional(f"terminal_constraint_{i}", 0.0, unit, zero_e, equality=bool(self.M.mu[i] > 1e-12))
            )

    def _functional(
        self, name: str, lam: float, mu: np.ndarray, e_field: SpaceTimeField, equality: bool
    ) -> LinearFunctional:
        spec, grid, cp = self.spec, self.grid, self.cp
        adjoint = solve_adjoint(spec, grid, cp, self.zeta, lam, mu, e_field, self.op, self.data)
        dT = horizon_derivative(spec, grid, cp, self.zeta, adjoint, lam, mu, e_field, self.op, self.data)
        density = control_gradient_density(grid, cp.T, self.data, adjoint, lam, e_field)
        return LinearFunctional(name=name, grad_T=dT, grad_v=self.weights * density, equality=equality)

    def direction(self, T_hat: float, v_hat: np.ndarray) -> ReducedDirection:
        v_hat = np.where(self.active, v_hat, 0.0)
        zeta_hat = direction_state(self.spec, self.grid, self.cp, self.zeta, T_hat, v_hat, self.op)
        return ReducedDirection(T_hat=float(T_hat), zeta_hat=zeta_hat, v_hat=SpaceTimeField(v_hat, self.grid, None))

    def _terminal_block(self, functional, T_hat: float, zh_final: np.ndarray) -> float:
        T, z, w = self.cp.T, self.zeta.terminal, self.grid.weight
        return (
            functional.d_TT(T, z, w) * T_hat**2
            + 2.0 * T_hat * w * float(np.sum(functional.d_Tzeta(T, z) * zh_final))
            + w * float(np.sum(functional.d_zetazeta(T, z) * zh_final**2))
        )

    def second_variation(self, d: ReducedDirection) -> float:
        """Second derivative of the discrete Lagrangian along (T̂, ζ̂, v̂)."""
        T, M = self.cp.T, self.M
        L, P, G = self.data.L, self.data.psi, self.data.g
        xi = d.xi_hat[:, None]
        zh, vh = d.zeta_hat.values, d.v_hat.values

        dL = L["t"] * xi + L["y"] * zh + L["u"] * vh
        dX = self.op.apply(zh) + P["t"] * xi + P["y"] * zh - vh
        d2X = P["tt"] * xi**2 + 2.0 * P["ty"] * xi * zh + P["yy"] * zh**2
        integrand = (
            M.lam * (2.0 * d.T_hat * dL + T * _hessian_form(L, xi, zh, vh))
            + self.phic * (2.0 * d.T_hat * dX + T * d2X)
            + M.e_field.values * _hessian_form(G, xi, zh, vh)
        )
        running = float(np.sum(self.weights * integrand))

        terminal = M.lam * self._terminal_block(self.spec.terminal_cost, d.T_hat, zh[-1])
        for weight, constraint in zip(M.mu, self.spec.terminal_constraints):
            terminal += weight * self._terminal_block(constraint, d.T_hat, zh[-1])
        return terminal + running

    def bilinear(self, d1: ReducedDirection, d2: ReducedDirection) -> float:
        return 0.25 * (self.second_variation(d1 + d2) - self.second_variation(d1 - d2))

    def full_lagrangian(self, T: float, z: np.ndarray, v: np.ndarray) -> float:
        """λĴ + Σμψ + Σ τ⟨e, g⟩ + Σ ⟨q^k, R_k⟩ with the state z treated as an independent variable."""
        spec, grid, M = self.spec, self.grid, self.M
        cp = ControlPoint(T=T, v=SpaceTimeField(v, grid, None))
        value = lagrangian_value(spec, grid, cp, SpaceTimeField(z, grid, None), M.lam, M.mu, M.e_field)
        F = state_defect(spec, grid, T, z, v, self.op)
        theta, h = grid.theta, T * grid.step
        R = z[1:] - z[:-1] + h * (theta * F[1:] + (1.0 - theta) * F[:-1])
        return value + grid.weight * float(np.sum(M.adjoint.values[:-1] * R))

    def second_difference(self, d: ReducedDirection) -> FDMatch:
        """Second central difference of the full Lagrangian along d, best over a step sweep."""

        def along(eps: float) -> float:
            return self.full_lagrangian(
                self.cp.T + eps * d.T_hat,
                self.zeta.values + eps * d.zeta_hat.values,
                self.cp.v.values + eps * d.v_hat.values,
            )

        steps = [eps for eps in SECOND_DIFFERENCE_STEPS if self.cp.T - eps * abs(d.T_hat) > 0.0]
        return directional_curvature(along, self.second_variation(d), steps)

    def _pointwise_fix(self, T_hat: float, v_hat: np.ndarray) -> tuple[float, np.ndarray]:
        if self.T_pinned:
            T_hat = 0.0
        elif self.T_at_lo:
            T_hat = max(T_hat, 0.0)
        elif self.T_at_hi:
            T_hat = min(T_hat, 0.0)

        v_hat = np.where(self.active, v_hat, 0.0)
        if self.spec.g_is_identity:
            v_hat = np.where(self.strong, 0.0, v_hat)
            v_hat = np.where(self.weak_upper, np.minimum(v_hat, 0.0), v_hat)
            v_hat = np.where(self.weak_lower, np.maximum(v_hat, 0.0), v_hat)
            return T_hat, v_hat

        G = self.data.g
        g_u = np.where(self.active, G["u"], 1.0)
        xi = (T_hat * self.grid.s)[:, None]
        for _ in range(100):
            zh = direction_state(self.spec, self.grid, self.cp, self.zeta, T_hat, v_hat, self.op).values
            dg = G["t"] * xi + G["y"] * zh + G["u"] * v_hat
            bad = self.strong | (self.weak_upper & (dg > 0.0)) | (self.weak_lower & (dg < 0.0))
            correction = np.where(bad, dg / g_u, 0.0)
            v_hat = v_hat - correction
            if float(np.max(np.abs(correction), initial=0.0)) <= 1e-15 * max(1.0, float(np.max(np.abs(v_hat)))):
                break
        return T_hat, v_hat

    def _linear_project(self, T_hat: float, v_hat: np.ndarray, tol: float) -> tuple[float, np.ndarray]:
        rows = [
            f
            for f in self.functionals
            if f.equality or f(T_hat, v_hat) > tol * f.scale
        ]
        if not rows:
            return T_hat, v_hat
        movable = self.free_nodes.ravel()
        T_free = not self.T_pinned
        G = np.array([np.concatenate(([f.grad_T if T_free else 0.0], f.grad_v.ravel()[movable])) for f in rows])
        x = np.concatenate(([T_hat], v_hat.ravel()[movable]))
        values = np.array([f(T_hat, v_hat) for f in rows])
        shift = G.T @ (np.linalg.pinv(G @ G.T) @ values)
        x = x - shift
        out = v_hat.ravel().copy()
        out[movable] = x[1:]
        return (float(x[0]) if T_free else T_hat), out.reshape(v_hat.shape)

    def cone_residual(self, T_hat: float, v_hat: np.ndarray) -> float:
        worst = 0.0
        if self.T_pinned:
            worst = abs(T_hat)
        elif self.T_at_lo:
            worst = max(-T_hat, 0.0)
        elif self.T_at_hi:
            worst = max(T_hat, 0.0)

        if self.spec.g_is_identity:
            dg = v_hat
        else:
            zh = direction_state(self.spec, self.grid, self.cp, self.zeta, T_hat, v_hat, self.op).values
            G = self.data.g
            dg = G["t"] * (T_hat * self.grid.s)[:, None] + G["y"] * zh + G["u"] * v_hat
        worst = max(worst, float(np.max(np.abs(dg[self.strong]), initial=0.0)))
        worst = max(worst, float(np.max(dg[self.weak_upper], initial=0.0)))
        worst = max(worst, float(np.max(-dg[self.weak_lower], initial=0.0)))

        for f in self.functionals:
            value = f(T_hat, v_hat) / f.scale
            worst = max(worst, abs(value) if f.equality else max(value, 0.0))
        return worst

    def project_to_cone(self, T_hat: float, v_hat: np.ndarray, dir_tol: float, max_rounds: int = 50) -> ConeSample:
        residual = np.inf
        rounds = 0
        for rounds in range(1, max_rounds + 1):
            T_hat, v_hat = self._pointwise_fix(T_hat, v_hat)
            T_hat, v_hat = self._linear_project(T_hat, v_hat, dir_tol)
            T_hat, v_hat = self._pointwise_fix(T_hat, v_hat)
            residual = self.cone_residual(T_hat, v_hat)
            if residual <= dir_tol:
                break

        norm = np.sqrt(T_hat**2 + float(np.sum(self.weights * v_hat**2)))
        if not np.isfinite(norm) or norm < 1e-14:
            return ConeSample(direction=None, q_value=None, residual=float(residual), rounds=rounds, accepted=False)
        T_hat, v_hat = T_hat / norm, v_hat / norm
        residual = self.cone_residual(T_hat, v_hat)
        if residual > dir_tol:
            return ConeSample(direction=None, q_value=None, residual=residual, rounds=rounds, accepted=False)
        d = self.direction(T_hat, v_hat)
        return ConeSample(direction=d, q_value=self.second_variation(d), residual=residual, rounds=rounds, accepted=True)

    def sample_critical_cone(
        self, n: int, seed: int = 42, dir_tol: float = 1e-9, evaluator: BatchEvaluator | None = None
    ) -> list[ConeSample]:
        rng = np.random.default_rng(seed)
        draws = [(float(rng.standard_normal()), rng.standard_normal(self.cp.v.values.shape)) for _ in range(n)]
        outcomes = (evaluator or BatchEvaluator()).map(
            lambda draw: self.project_to_cone(draw[0], draw[1], dir_tol), draws, label="cone sample"
        )
        samples = [o.value for o in outcomes if o.ok]
        logger.info(
            "Critical cone: {} accepted, {} rejected, {} failed of {}",
            sum(1 for s in samples if s.accepted),
            sum(1 for s in samples if not s.accepted),
            sum(1 for o in outcomes if not o.ok),
            n,
        )
        return samples

    def legendre_clebsch(self) -> LegendreClebsch:
        margin = self.M.lam * self.cp.T * self.data.L["uu"] + self.M.e_field.values * self.data.g["uu"]
        margin = np.where(self.active, margin, np.nan)
        infimum = float(np.nanmin(margin)) if np.any(self.active) else np.nan
        free = np.where(self.free_nodes, margin, np.nan)
        infimum_free = float(np.nanmin(free)) if np.any(self.free_nodes) else np.inf
        return LegendreClebsch(
            margin=SpaceTimeField(np.where(self.active, margin, 0.0), self.grid, None),
            infimum=infimum,
            infimum_free=infimum_free,
            normalized=infimum / self.cp.T,
        )

    def verdict(self, config: SOCConfig, evaluator: BatchEvaluator | None = None) -> SOCReport:
        if config.samples < 1:
            raise ValueError(f"critical-cone sampling needs at least one sample, got {config.samples}")
        samples = self.sample_critical_cone(config.samples, config.seed, config.dir_tol, evaluator)
        values = [s.q_value for s in samples if s.accepted]
        legendre = self.legendre_clebsch()
        cone_trivial = not values and self._cone_is_trivial()
        q_min = min(values) if values else None

        if q_min is None:
            necessary = cone_trivial
            sufficient = cone_trivial and legendre.infimum > 0.0
        else:
            necessary = q_min >= -config.soc_tol
            sufficient = q_min >= config.soc_margin and legendre.infimum > 0.0

        report = SOCReport(
            samples_requested=config.samples,
            accepted=len(values),
            rejected=sum(1 for s in samples if not s.accepted),
            failed=config.samples - len(samples),
            seed=config.seed,
            q_min=q_min,
            q_summary=summarize_samples(values),
            necessary=bool(necessary),
            sufficient=bool(sufficient),
            cone_trivial=cone_trivial,
            legendre=legendre,
        )
        report.interpretation = {
            "necessary": self._interpret_necessary(report),
            "sufficient": self._interpret_sufficient(report),
            "legendre_clebsch": self._interpret_legendre(legendre.infimum),
        }
        return report

    def _cone_is_trivial(self) -> bool:
        return self.T_pinned and not np.any(self.free_nodes)

    @staticmethod
    def _interpret_necessary(report: SOCReport) -> str:
        if report.q_min is None:
            if report.cone_trivial:
                return "Critical cone is {0}; the necessary condition holds trivially."
            return "No critical direction passed the residual check; inconclusive."
        if report.necessary:
            return "No sampled critical direction gives negative curvature."
        return f"Negative curvature found (min Q = {report.q_min:.3e}); the point is not a local minimizer."

    @staticmethod
    def _interpret_sufficient(report: SOCReport) -> str:
        if report.sufficient:
            return "Sampled curvature is uniformly positive and the Legendre-Clebsch margin is positive."
        if report.legendre.infimum <= 0.0:
            return "Legendre-Clebsch margin is not positive; strict growth in the control is not certified."
        return "Sampled curvature does not clear the positivity margin."

    @staticmethod
    def _interpret_legendre(infimum: float) -> str:
        if not np.isfinite(infimum):
            return "No active control levels."
        if infimum > 0.0:
            return "Strengthened Legendre-Clebsch condition holds."
        if infimum == 0.0:
            return "Legendre-Clebsch margin is degenerate."
        return "Legendre-Clebsch condition fails; the Hamiltonian is concave in the control somewhere."


def physical_second_variation(
    spec: ProblemSpec,
    grid: Grid,
    T: float,
    y: SpaceTimeField,
    u: SpaceTimeField,
    M_phys: MultiplierSet,
    direction: PhysicalDirection,
    op: DiscreteOperator | None = None,
) -> float:
    """Same quadratic form in physical time: weights T·τ_k, ẽ = e/T and time perturbation T̂·t/T."""
    op = op or operator_for(spec, grid)
    data = PointwiseData.at(spec, grid, T, y.values, u.values)
    L, P, G = data.L, data.psi, data.g
    phic = collocated_adjoint(grid, M_phys.adjoint.values)
    rate = direction.T_hat / T
    xi = (rate * y.times)[:, None]
    yh, uh = direction.y_hat.values, direction.u_hat.values

    dL = L["t"] * xi + L["y"] * yh + L["u"] * uh
    dX = op.apply(yh) + P["t"] * xi + P["y"] * yh - uh
    d2X = P["tt"] * xi**2 + 2.0 * P["ty"] * xi * yh + P["yy"] * yh**2
    integrand = (
        M_phys.lam * (2.0 * rate * dL + _hessian_form(L, xi, yh, uh))
        + phic * (2.0 * rate * dX + d2X)
        + M_phys.e_field.values * _hessian_form(G, xi, yh, uh)
    )
    weights = T * grid.time_weights[:, None] * grid.weight
    running = float(np.sum(weights * integrand))

    def block(functional) -> float:
        z, w, zh = y.terminal, grid.weight, yh[-1]
        return (
            functional.d_TT(T, z, w) * direction.T_hat**2
            + 2.0 * direction.T_hat * w * float(np.sum(functional.d_Tzeta(T, z) * zh))
            + w * float(np.sum(functional.d_zetazeta(T, z) * zh**2))
        )

    terminal = M_phys.lam * block(spec.terminal_cost)
    for weight, constraint in zip(M_phys.mu, spec.terminal_constraints):
        terminal += weight * block(constraint)
    return terminal + running


def soc_verdict(
    spec: ProblemSpec,
    grid: Grid,
    result: SolveResult,
    config: SOCConfig | None = None,
    evaluator: BatchEvaluator | None = None,
) -> SOCReport:
    config = config or SOCConfig()
    if not result.converged:
        logger.warning("Second-order analysis at a non-converged point ({})", result.termination.value)
    return SecondOrderAnalyzer.from_result(spec, grid, result).verdict(config, evaluator)
