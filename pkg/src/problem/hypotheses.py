"""Sampling-based surrogates for the structural assumptions on the problem data.

The assumptions are statements about functions on the whole domain; here they are checked on a
finite sample box, so a pass is evidence and a fail comes with a witness point.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Any

import numpy as np
from loguru import logger

from src.discretization.grid import build_grid_from_extent
from src.discretization.operator import validate_coefficients
from src.problem.catalog import RUNNING_PARTIALS, NodalFunction, TerminalFunctional
from src.problem.spec import ProblemSpec
from src.utils.finite_difference import DEFAULT_STEPS, directional_derivative

GU_FLOOR = 1e-12
DERIVATIVE_TOL = 1e-5


class HypothesisStatus(str, Enum):
    PASS = "pass"
    FAIL = "fail"
    NOT_SAMPLED = "not sampled"
    BY_CONSTRUCTION = "by construction"


@dataclass(frozen=True, slots=True)
class SampleBox:
    """Ranges for (t, y, u) plus the spatial sampling resolution."""

    t_range: tuple[float, float] = (0.0, 2.0)
    y_range: tuple[float, float] = (-2.0, 2.0)
    u_range: tuple[float, float] = (-2.0, 2.0)
    points_per_axis: int = 11
    spatial_nodes: int = 7
    random_points: int = 100
    seed: int = 42

    def __post_init__(self) -> None:
        for name in ("t_range", "y_range", "u_range"):
            lo, hi = getattr(self, name)
            if not (np.isfinite(lo) and np.isfinite(hi) and lo <= hi):
                raise ValueError(f"{name} must be a finite interval, got {(lo, hi)}")
        if self.points_per_axis < 1 or self.random_points < 1:
            raise ValueError("sample box must be nonempty")
        if self.spatial_nodes < 3:
            raise ValueError(f"spatial_nodes must be >= 3, got {self.spatial_nodes}")


@dataclass(slots=True)
class HypothesisCheck:
    name: str
    status: HypothesisStatus
    worst: float | None = None
    witness: dict[str, Any] | None = None
    detail: str = ""

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "status": self.status.value,
            "worst": self.worst,
            "witness": self.witness,
            "detail": self.detail,
        }


@dataclass(slots=True)
class HypothesisReport:
    checks: list[HypothesisCheck] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.status is not HypothesisStatus.FAIL for c in self.checks)

    def get(self, name: str) -> HypothesisCheck:
        for check in self.checks:
            if check.name == name:
                return check
        raise KeyError(name)

    def to_dict(self) -> dict[str, Any]:
        return {
            "passed": self.passed,
            "checks": [c.to_dict() for c in self.checks],
            "note": "checks are sampled on a finite box; they support but do not prove the assumptions",
        }


def _tensor_samples(spec: ProblemSpec, samples: SampleBox) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    grid = build_grid_from_extent(spec.domain_extent, (samples.spatial_nodes,) * spec.spatial_dim, 2)
    n = samples.points_per_axis
    t, y, u = np.meshgrid(*(np.linspace(lo, hi, n) for lo, hi in (samples.t_range, samples.y_range, samples.u_range)), indexing="ij")
    return grid.coords, t[..., None], y[..., None], u[..., None]


def _witness(index: tuple[int, ...], x, t, y, u) -> dict[str, Any]:
    i, j, k, node = index
    return {
        "x": x[node].tolist(),
        "t": float(t[i, j, k, 0]),
        "y": float(y[i, j, k, 0]),
        "u": float(u[i, j, k, 0]),
    }


def check_coefficients(spec: ProblemSpec) -> HypothesisCheck:
    try:
        matrix = validate_coefficients(spec.diffusion, spec.spatial_dim)
    except ValueError as exc:
        return HypothesisCheck("H1", HypothesisStatus.FAIL, detail=str(exc))
    smallest = float(np.linalg.eigvalsh(matrix).min())
    return HypothesisCheck("H1", HypothesisStatus.PASS, worst=smallest, detail="diffusion matrix symmetric positive definite")


def check_monotonicity(spec: ProblemSpec, samples: SampleBox) -> HypothesisCheck:
    x, t, y, u = _tensor_samples(spec, samples)
    psi_y = np.broadcast_to(spec.psi("y", x, t, y, u), t.shape[:-1] + (x.shape[0],))
    if not np.all(np.isfinite(psi_y)):
        index = np.unravel_index(int(np.argmax(~np.isfinite(psi_y))), psi_y.shape)
        return HypothesisCheck("H2", HypothesisStatus.FAIL, witness=_witness(index, x, t, y, u), detail="psi_y is not finite")
    index = np.unravel_index(int(np.argmin(psi_y)), psi_y.shape)
    worst = float(psi_y[index])
    status = HypothesisStatus.PASS if worst >= 0.0 else HypothesisStatus.FAIL
    return HypothesisCheck("H2", status, worst=worst, witness=_witness(index, x, t, y, u), detail="min psi_y over samples")


def _nodal_parent(partial: str) -> tuple[str, str]:
    """Parent partial and the variable differentiated to reach `partial`."""
    if len(partial) == 1:
        return "value", partial
    return partial[0], partial[1]


def _nodal_mismatches(fn: NodalFunction, points: list[tuple[np.ndarray, float, float, float]]) -> tuple[float, dict | None, str]:
    worst, witness, detail = 0.0, None, ""
    for x, t, y, u in points:
        base = {"t": t, "y": y, "u": u}
        for partial in RUNNING_PARTIALS[1:]:
            parent, var = _nodal_parent(partial)

            def along(h: float) -> float:
                args = dict(base)
                args[var] = base[var] + h
                return float(np.ravel(fn(parent, x, args["t"], args["y"], args["u"]))[0])

            exact = float(np.ravel(fn(partial, x, t, y, u))[0])
            point = {"x": x[0].tolist(), "t": t, "y": y, "u": u}
            if not np.isfinite(exact):
                return np.inf, point, f"{fn.name}: {partial} is not finite"
            match = directional_derivative(along, exact, DEFAULT_STEPS)
            relative = match.error / max(1.0, abs(exact))
            if not np.isfinite(relative):
                return np.inf, point, f"{fn.name}: finite difference of {parent} is not finite"
            if relative > worst:
                worst, witness, detail = relative, point, f"{fn.name}: {partial}"
    return worst, witness, detail


def _terminal_mismatches(functional: TerminalFunctional, points: list[tuple[float, float]], weight: float) -> tuple[float, dict | None, str]:
    worst, witness, detail = 0.0, None, ""
    for T, z in points:
        zs = np.array([z])
        checks = {
            "T": (lambda h: functional.value(T + h, zs, weight), functional.d_T(T, zs, weight)),
            "TT": (lambda h: functional.d_T(T + h, zs, weight), functional.d_TT(T, zs, weight)),
            "z": (lambda h: float(functional.density("value", T, zs + h)[0]), float(functional.d_zeta(T, zs)[0])),
            "Tz": (lambda h: float(functional.d_zeta(T + h, zs)[0]), float(functional.d_Tzeta(T, zs)[0])),
            "zz": (lambda h: float(functional.d_zeta(T, zs + h)[0]), float(functional.d_zetazeta(T, zs)[0])),
        }
        for partial, (along, exact) in checks.items():
            point = {"T": T, "z": z}
            match = directional_derivative(along, exact, DEFAULT_STEPS)
            relative = match.error / max(1.0, abs(exact))
            if not np.isfinite(relative):
                return np.inf, point, f"{functional.name}: {partial} is not finite"
            if relative > worst:
                worst, witness, detail = relative, point, f"{functional.name}: {partial}"
    return worst, witness, detail


def check_derivatives(spec: ProblemSpec, samples: SampleBox) -> HypothesisCheck:
    rng = np.random.default_rng(samples.seed)
    x_all, _, _, _ = _tensor_samples(spec, samples)
    nodal_points = [
        (
            x_all[rng.integers(x_all.shape[0])][None, :],
            float(rng.uniform(*samples.t_range)),
            float(rng.uniform(*samples.y_range)),
            float(rng.uniform(*samples.u_range)),
        )
        for _ in range(samples.random_points)
    ]
    terminal_points = [
        (float(rng.uniform(spec.T_lo, spec.T_hi)) if not spec.horizon_fixed else spec.T_lo, float(rng.uniform(*samples.y_range)))
        for _ in range(samples.random_points)
    ]

    worst, witness, detail = 0.0, None, ""
    for fn in (spec.psi, spec.running_cost, spec.mixed_constraint):
        value, point, where = _nodal_mismatches(fn, nodal_points)
        if value > worst:
            worst, witness, detail = value, point, where
    weight = 1.0
    for functional in (spec.terminal_cost, *spec.terminal_constraints):
        value, point, where = _terminal_mismatches(functional, terminal_points, weight)
        if value > worst:
            worst, witness, detail = value, point, where

    status = HypothesisStatus.PASS if worst <= DERIVATIVE_TOL else HypothesisStatus.FAIL
    return HypothesisCheck("H4", status, worst=worst, witness=witness, detail=detail or "all partials consistent")


def check_control_sensitivity(spec: ProblemSpec, samples: SampleBox) -> HypothesisCheck:
    x, t, y, u = _tensor_samples(spec, samples)
    g_u = np.broadcast_to(spec.mixed_constraint("u", x, t, y, u), t.shape[:-1] + (x.shape[0],))
    magnitude = np.abs(g_u)
    if not np.all(np.isfinite(magnitude)):
        index = np.unravel_index(int(np.argmax(~np.isfinite(magnitude))), magnitude.shape)
        return HypothesisCheck("H5", HypothesisStatus.FAIL, witness=_witness(index, x, t, y, u), detail="g_u is not finite")
    index = np.unravel_index(int(np.argmin(magnitude)), magnitude.shape)
    smallest = float(magnitude[index])
    if smallest < GU_FLOOR:
        return HypothesisCheck(
            "H5", HypothesisStatus.FAIL, worst=smallest, witness=_witness(index, x, t, y, u), detail="|g_u| vanishes"
        )
    return HypothesisCheck(
        "H5", HypothesisStatus.PASS, worst=1.0 / smallest, witness=_witness(index, x, t, y, u), detail="max 1/|g_u| over samples"
    )


def check_hypotheses(spec: ProblemSpec, samples: SampleBox | None = None) -> HypothesisReport:
    samples = samples or SampleBox(t_range=(0.0, spec.T_hi))
    report = HypothesisReport(
        checks=[
            check_coefficients(spec),
            check_monotonicity(spec, samples),
            check_derivatives(spec, samples),
            check_control_sensitivity(spec, samples),
            HypothesisCheck("H6", HypothesisStatus.NOT_SAMPLED, detail="constraint qualification is checked at solutions, not on the data"),
            HypothesisCheck("H7", HypothesisStatus.BY_CONSTRUCTION, detail="terminal functionals are smooth integral functionals"),
        ]
    )
    failed = [c.name for c in report.checks if c.status is HypothesisStatus.FAIL]
    if failed:
        logger.warning("Hypothesis checks failed: {}", ", ".join(failed))
    return report
