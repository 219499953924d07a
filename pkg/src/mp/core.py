"""Finite-dimensional optimality checks: min f s.t. F(x) = 0, H(x) ≤ 0, G(x) ∈ [lo, hi]."""

import itertools
from collections.abc import Callable
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from loguru import logger
from scipy.linalg import null_space
from scipy.optimize import linprog, lsq_linear, minimize

ArrayFn = Callable[[np.ndarray], np.ndarray]

MULTIPLIER_TOL = 1e-9
CONE_TOL = 1e-9


class OracleRefusedError(ValueError):
    """The brute-force oracle only scans boxes in at most four dimensions."""


def _empty_map(n: int) -> tuple[ArrayFn, ArrayFn, ArrayFn]:
    return (lambda x: np.zeros(0), lambda x: np.zeros((0, n)), lambda x: np.zeros((0, n, n)))


@dataclass(slots=True)
class MPProblem:
    """Objective and constraint maps with first and second derivatives.

    Each constraint block is (value, jacobian, hessians); hessians have shape (rows, n, n).
    """

    name: str
    n: int
    f: Callable[[np.ndarray], float]
    grad_f: ArrayFn
    hess_f: ArrayFn
    F: tuple[ArrayFn, ArrayFn, ArrayFn] | None = None
    H: tuple[ArrayFn, ArrayFn, ArrayFn] | None = None
    G: tuple[ArrayFn, ArrayFn, ArrayFn] | None = None
    G_lo: np.ndarray = field(default_factory=lambda: np.zeros(0))
    G_hi: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self) -> None:
        self.F = self.F or _empty_map(self.n)
        self.H = self.H or _empty_map(self.n)
        self.G = self.G or _empty_map(self.n)
        self.G_lo = np.asarray(self.G_lo, dtype=float)
        self.G_hi = np.asarray(self.G_hi, dtype=float)
        if np.any(self.G_lo > self.G_hi):
            raise ValueError(f"{self.name}: set constraint needs lo <= hi")

    def violation(self, x: np.ndarray) -> float:
        worst = float(np.max(np.abs(self.F[0](x)), initial=0.0))
        worst = max(worst, float(np.max(self.H[0](x), initial=0.0)))
        g = self.G[0](x)
        worst = max(worst, float(np.max(np.maximum(self.G_lo - g, g - self.G_hi), initial=0.0)))
        return worst


@dataclass(slots=True)
class ActiveSet:
    inequality: np.ndarray
    upper: np.ndarray
    lower: np.ndarray

    @property
    def pinned(self) -> np.ndarray:
        return self.upper & self.lower


def active_set(problem: MPProblem, x: np.ndarray, tol: float = 1e-8) -> ActiveSet:
    g = problem.G[0](x)
    return ActiveSet(
        inequality=problem.H[0](x) >= -tol,
        upper=g >= problem.G_hi - tol,
        lower=g <= problem.G_lo + tol,
    )


@dataclass(slots=True)
class MultiplierResult:
    found: bool
    lam: float
    w: np.ndarray
    l: np.ndarray
    e: np.ndarray
    residual: float
    mfcq: bool
    abnormal_exists: bool
    method: str

    @property
    def normal(self) -> bool:
        return self.found and self.lam > 0.0

    def to_dict(self) -> dict[str, Any]:
        return {
            "found": self.found,
            "normal": self.normal,
            "lambda": self.lam,
            "w": self.w.tolist(),
            "l": self.l.tolist(),
            "e": self.e.tolist(),
            "residual": self.residual,
            "mfcq": self.mfcq,
            "abnormal_multipliers_exist": self.abnormal_exists,
            "method": self.method,
        }


def lagrangian_gradient(problem: MPProblem, x: np.ndarray, lam: float, w, l, e) -> np.ndarray:
    return (
        lam * problem.grad_f(x)
        + problem.F[1](x).T @ np.asarray(w, dtype=float)
        + problem.H[1](x).T @ np.asarray(l, dtype=float)
        + problem.G[1](x).T @ np.asarray(e, dtype=float)
    )


def lagrangian_hessian(problem: MPProblem, x: np.ndarray, lam: float, w, l, e) -> np.ndarray:
    hessian = lam * problem.hess_f(x)
    for block, weights in ((problem.F, w), (problem.H, l), (problem.G, e)):
        hessians = block[2](x)
        if hessians.size:
            hessian = hessian + np.tensordot(np.asarray(weights, dtype=float), hessians, axes=1)
    return hessian


def _sign_bounds(active: ActiveSet) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    l_lo = np.zeros(active.inequality.size)
    l_hi = np.where(active.inequality, np.inf, 0.0)
    e_lo = np.where(active.lower, -np.inf, 0.0)
    e_hi = np.where(active.upper, np.inf, 0.0)
    return l_lo, l_hi, e_lo, e_hi


def _split(z: np.ndarray, p: int, m: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    return z[:p], z[p : p + m], z[p + m :]


def _enumerate_normal(
    problem: MPProblem, x: np.ndarray, active: ActiveSet
) -> tuple[np.ndarray, float] | None:
    """Exact solve over every sign pattern of the one-sided multipliers; None if no pattern is consistent."""
    DF, DH, DG = problem.F[1](x), problem.H[1](x), problem.G[1](x)
    p, m = DF.shape[0], DH.shape[0]
    one_sided = [("H", i) for i in np.flatnonzero(active.inequality)]
    one_sided += [("G", j) for j in np.flatnonzero((active.upper | active.lower) & ~active.pinned)]
    pinned = [j for j in np.flatnonzero(active.pinned)]
    rhs = -problem.grad_f(x)

    best: tuple[np.ndarray, float] | None = None
    for size in range(len(one_sided) + 1):
        for subset in itertools.combinations(one_sided, size):
            columns = list(DF)
            index = [("F", i) for i in range(p)]
            for kind, i in subset:
                columns.append(DH[i] if kind == "H" else DG[i])
                index.append((kind, i))
            for j in pinned:
                columns.append(DG[j])
                index.append(("G", j))
            A = np.array(columns).T if columns else np.zeros((problem.n, 0))
            coeffs = np.linalg.lstsq(A, rhs, rcond=None)[0] if A.shape[1] else np.zeros(0)
            residual = float(np.linalg.norm(A @ coeffs - rhs))
            z = np.zeros(p + m + DG.shape[0])
            for (kind, i), value in zip(index, coeffs):
                offset = {"F": 0, "H": p, "G": p + m}[kind]
                z[offset + i] = value
            _, l, e = _split(z, p, m)
            signs_ok = np.all(l >= -MULTIPLIER_TOL) and np.all(
                np.where(active.upper & ~active.pinned, e >= -MULTIPLIER_TOL, True)
                & np.where(active.lower & ~active.pinned, e <= MULTIPLIER_TOL, True)
            )
            if signs_ok and (best is None or residual < best[1] - 1e-15):
                best = (z, residual)
        if best is not None and best[1] <= MULTIPLIER_TOL:
            return best
    return best


def _stacked_jacobians(
    problem: MPProblem, x: np.ndarray, active: ActiveSet
) -> tuple[np.ndarray, np.ndarray, list[tuple[int, float]], list[tuple[int, float]]]:
    """Equality-type rows (F and pinned G) and signed one-sided rows (active H, active G pointing outward).

    Tags map each row to its slot in the stacked (w, l, e) vector and the sign it enters with.
    """
    DF, DH, DG = problem.F[1](x), problem.H[1](x), problem.G[1](x)
    p, m = DF.shape[0], DH.shape[0]
    eq_rows, eq_tags = list(DF), [(i, 1.0) for i in range(p)]
    ineq_rows: list[np.ndarray] = []
    ineq_tags: list[tuple[int, float]] = []
    for i in np.flatnonzero(active.inequality):
        ineq_rows.append(DH[i])
        ineq_tags.append((p + i, 1.0))
    for j in range(DG.shape[0]):
        if active.pinned[j]:
            eq_rows.append(DG[j])
            eq_tags.append((p + m + j, 1.0))
        elif active.upper[j]:
            ineq_rows.append(DG[j])
            ineq_tags.append((p + m + j, 1.0))
        elif active.lower[j]:
            ineq_rows.append(-DG[j])
            ineq_tags.append((p + m + j, -1.0))
    n = problem.n
    return np.array(eq_rows).reshape(-1, n), np.array(ineq_rows).reshape(-1, n), eq_tags, ineq_tags


def mfcq_holds(problem: MPProblem, x: np.ndarray, active: ActiveSet | None = None) -> bool:
    active = active or active_set(problem, x)
    equality, inequality, _, _ = _stacked_jacobians(problem, x, active)
    if equality.shape[0] and np.linalg.matrix_rank(equality) < equality.shape[0]:
        return False
    if not inequality.shape[0]:
        return True
    # maximize s subject to E d = 0, I d + s <= 0, |d| <= 1
    n = problem.n
    cost = np.zeros(n + 1)
    cost[-1] = -1.0
    A_ub = np.hstack([inequality, np.ones((inequality.shape[0], 1))])
    A_eq = np.hstack([equality, np.zeros((equality.shape[0], 1))]) if equality.shape[0] else None
    bounds = [(-1.0, 1.0)] * n + [(None, 1.0)]
    solution = linprog(
        cost,
        A_ub=A_ub,
        b_ub=np.zeros(A_ub.shape[0]),
        A_eq=A_eq,
        b_eq=np.zeros(equality.shape[0]) if A_eq is not None else None,
        bounds=bounds,
        method="highs",
    )
    return bool(solution.status == 0 and -solution.fun > 1e-10)


def abnormal_multipliers(problem: MPProblem, x: np.ndarray, active: ActiveSet | None = None) -> np.ndarray | None:
    """A nonzero stacked (w, l, e) with admissible signs and DFᵀw + DHᵀl + DGᵀe = 0, or None."""
    active = active or active_set(problem, x)
    equality, inequality, eq_tags, ineq_tags = _stacked_jacobians(problem, x, active)
    size = problem.F[1](x).shape[0] + problem.H[1](x).shape[0] + problem.G[1](x).shape[0]
    z = np.zeros(size)
    if equality.shape[0] and np.linalg.matrix_rank(equality) < equality.shape[0]:
        kernel = null_space(equality.T)[:, 0]
        for (slot, sign), value in zip(eq_tags, kernel):
            z[slot] = sign * value
        return z
    k = inequality.shape[0]
    if k == 0:
        return None
    # c >= 0 with Σc = 1 and Eᵀw + Iᵀc = 0 for some free w
    p = equality.shape[0]
    A_eq = np.vstack([np.hstack([equality.T, inequality.T]), np.concatenate([np.zeros(p), np.ones(k)])[None, :]])
    b_eq = np.concatenate([np.zeros(problem.n), [1.0]])
    bounds = [(None, None)] * p + [(0.0, None)] * k
    solution = linprog(np.zeros(p + k), A_eq=A_eq, b_eq=b_eq, bounds=bounds, method="highs")
    if solution.status != 0:
        return None
    for (slot, sign), value in zip(eq_tags + ineq_tags, solution.x):
        z[slot] = sign * value
    return z


def abnormal_multipliers_exist(problem: MPProblem, x: np.ndarray, active: ActiveSet | None = None) -> bool:
    return abnormal_multipliers(problem, x, active) is not None


def find_multipliers(
    problem: MPProblem, x: np.ndarray, normalize_lambda: bool = True, act_tol: float = 1e-8
) -> MultiplierResult:
    x = np.asarray(x, dtype=float)
    active = active_set(problem, x, act_tol)
    p, m, k = problem.F[1](x).shape[0], problem.H[1](x).shape[0], problem.G[1](x).shape[0]
    mfcq = mfcq_holds(problem, x, active)
    abnormal = abnormal_multipliers(problem, x, active)
    n_one_sided = int(np.sum(active.inequality)) + int(np.sum((active.upper | active.lower) & ~active.pinned))

    if n_one_sided <= 8:
        method = "active-set-enumeration"
        outcome = _enumerate_normal(problem, x, active)
        z, residual = outcome if outcome is not None else (np.zeros(p + m + k), np.inf)
    else:
        method = "bounded-least-squares"
        A = np.hstack([problem.F[1](x).T, problem.H[1](x).T, problem.G[1](x).T])
        l_lo, l_hi, e_lo, e_hi = _sign_bounds(active)
        lo = np.concatenate([np.full(p, -np.inf), l_lo, e_lo])
        hi = np.concatenate([np.full(p, np.inf), l_hi, e_hi])
        solution = lsq_linear(A, -problem.grad_f(x), bounds=(lo, hi), method="bvls", tol=1e-14)
        z, residual = solution.x, float(np.linalg.norm(A @ solution.x + problem.grad_f(x)))

    scale = max(1.0, float(np.linalg.norm(problem.grad_f(x))))
    found = bool(residual <= MULTIPLIER_TOL * scale)
    lam = 1.0
    if not found and not normalize_lambda and abnormal is not None:
        logger.info("{}: no normal multiplier at x={}; reporting abnormal multipliers", problem.name, x.tolist())
        lam, found, z, residual = 0.0, True, abnormal, 0.0
    w, l, e = _split(z, p, m)
    return MultiplierResult(
        found=found,
        lam=lam,
        w=w,
        l=l,
        e=e,
        residual=float(residual),
        mfcq=mfcq,
        abnormal_exists=abnormal is not None,
        method=method,
    )


@dataclass(slots=True)
class ConeSampleResult:
    directions: list[np.ndarray]
    rejected: int
    trivial: bool


def _cone_rows(
    problem: MPProblem, x: np.ndarray, mult: MultiplierResult, active: ActiveSet
) -> tuple[np.ndarray, np.ndarray]:
    """Critical cone as {E d = 0, I d <= 0}; strictly positive multipliers turn their rows into equalities."""
    DF, DH, DG = problem.F[1](x), problem.H[1](x), problem.G[1](x)
    equality: list[np.ndarray] = [row for row in DF]
    inequality: list[np.ndarray] = []
    for i in np.flatnonzero(active.inequality):
        (equality if mult.l[i] > MULTIPLIER_TOL else inequality).append(DH[i])
    for j in range(DG.shape[0]):
        if active.pinned[j]:
            equality.append(DG[j])
        elif active.upper[j]:
            (equality if mult.e[j] > MULTIPLIER_TOL else inequality).append(DG[j])
        elif active.lower[j]:
            (equality if mult.e[j] < -MULTIPLIER_TOL else inequality).append(-DG[j])
    inequality.append(problem.grad_f(x))
    n = problem.n
    return np.array(equality).reshape(-1, n), np.array(inequality).reshape(-1, n)


def critical_cone_sample(
    problem: MPProblem, x: np.ndarray, mult: MultiplierResult, n: int, seed: int = 42
) -> ConeSampleResult:
    if n < 1:
        raise ValueError(f"critical-cone sampling needs at least one sample, got {n}")
    x = np.asarray(x, dtype=float)
    active = active_set(problem, x)
    equality, inequality = _cone_rows(problem, x, mult, active)
    basis = null_space(equality) if equality.shape[0] else np.eye(problem.n)
    if basis.shape[1] == 0:
        return ConeSampleResult(directions=[], rejected=0, trivial=True)
    reduced = inequality @ basis

    rng = np.random.default_rng(seed)
    directions: list[np.ndarray] = []
    rejected = 0
    for _ in range(n):
        target = basis.T @ rng.standard_normal(problem.n)
        solution = minimize(
            lambda z: 0.5 * float(np.sum((z - target) ** 2)),
            x0=np.zeros_like(target),
            jac=lambda z: z - target,
            constraints=[{"type": "ineq", "fun": lambda z: -(reduced @ z), "jac": lambda z: -reduced}],
            method="SLSQP",
            options={"ftol": 1e-15, "maxiter": 200},
        )
        z = solution.x
        # polish: rows that ended up tight are enforced exactly
        tight = reduced @ z > -1e-7 * max(1.0, float(np.linalg.norm(z)))
        if np.any(tight):
            sub = null_space(reduced[tight])
            z = sub @ (sub.T @ z) if sub.shape[1] else np.zeros_like(z)
        d = basis @ z
        norm = float(np.linalg.norm(d))
        if norm < 1e-10:
            rejected += 1
            continue
        d = d / norm
        residual = max(
            float(np.max(np.abs(equality @ d), initial=0.0)),
            float(np.max(inequality @ d, initial=0.0)),
        )
        if residual > CONE_TOL:
            rejected += 1
            continue
        directions.append(d)
    return ConeSampleResult(directions=directions, rejected=rejected, trivial=False)


@dataclass(slots=True)
class SecondOrderResult:
    q_values: list[float]
    q_min: float | None
    necessary: bool
    sufficient: bool
    hessian_eigenvalues: list[float]

    def to_dict(self) -> dict[str, Any]:
        return {
            "q_min": self.q_min,
            "samples": len(self.q_values),
            "necessary_holds": self.necessary,
            "sufficient_holds": self.sufficient,
            "hessian_eigenvalues": self.hessian_eigenvalues,
        }


def second_order_check(
    problem: MPProblem,
    x: np.ndarray,
    mult: MultiplierResult,
    cone: ConeSampleResult,
    soc_tol: float = 1e-8,
    soc_margin: float = 1e-10,
) -> SecondOrderResult:
    hessian = lagrangian_hessian(problem, np.asarray(x, dtype=float), mult.lam, mult.w, mult.l, mult.e)
    values = [float(d @ hessian @ d) for d in cone.directions]
    q_min = min(values) if values else None
    if q_min is None:
        necessary = sufficient = cone.trivial
    else:
        necessary = q_min >= -soc_tol
        sufficient = q_min >= soc_margin
    return SecondOrderResult(
        q_values=values,
        q_min=q_min,
        necessary=bool(necessary),
        sufficient=bool(sufficient),
        hessian_eigenvalues=np.linalg.eigvalsh(0.5 * (hessian + hessian.T)).tolist(),
    )


@dataclass(slots=True)
class BruteForceResult:
    x: np.ndarray
    value: float
    grid_points: int
    feasible_points: int

    def to_dict(self) -> dict[str, Any]:
        return {
            "x": self.x.tolist(),
            "value": self.value,
            "grid_points": self.grid_points,
            "feasible_points": self.feasible_points,
        }


def brute_force_optimum(problem: MPProblem, box: list[tuple[float, float]], grid_points: int = 41) -> BruteForceResult:
    """Scan a tensor grid of the box, keep the best near-feasible point and polish it with SLSQP."""
    if problem.n > 4:
        raise OracleRefusedError(f"{problem.name}: brute force supports n <= 4, got n = {problem.n}")
    if len(box) != problem.n:
        raise ValueError(f"box has {len(box)} intervals for n = {problem.n}")
    axes = [np.linspace(lo, hi, grid_points) for lo, hi in box]
    spacing = max((hi - lo) / (grid_points - 1) for lo, hi in box)
    points = np.stack([m.ravel() for m in np.meshgrid(*axes, indexing="ij")], axis=-1)

    best_x, best_value, feasible = None, np.inf, 0
    for point in points:
        # the grid rarely meets an equality exactly, so accept points within one cell of it
        slack = spacing * max(1.0, float(np.max(np.abs(problem.F[1](point)), initial=0.0)))
        if problem.violation(point) > slack:
            continue
        feasible += 1
        value = problem.f(point)
        if value < best_value:
            best_x, best_value = point, value
    if best_x is None:
        raise ValueError(f"{problem.name}: no feasible grid point in {box}")

    constraints = []
    if problem.F[0](best_x).size:
        constraints.append({"type": "eq", "fun": problem.F[0], "jac": problem.F[1]})
    if problem.H[0](best_x).size:
        constraints.append({"type": "ineq", "fun": lambda z: -problem.H[0](z), "jac": lambda z: -problem.H[1](z)})
    if problem.G[0](best_x).size:
        constraints.append({"type": "ineq", "fun": lambda z: problem.G_hi - problem.G[0](z), "jac": lambda z: -problem.G[1](z)})
        constraints.append({"type": "ineq", "fun": lambda z: problem.G[0](z) - problem.G_lo, "jac": problem.G[1]})
    polished = minimize(
        problem.f,
        best_x,
        jac=problem.grad_f,
        bounds=box,
        constraints=constraints,
        method="SLSQP",
        options={"ftol": 1e-14, "maxiter": 500},
    )
    x = polished.x if polished.success and problem.violation(polished.x) <= 1e-8 else best_x
    value = problem.f(x)
    if value > best_value and problem.violation(best_x) <= 1e-8:
        x, value = best_x, best_value
    return BruteForceResult(x=np.asarray(x, dtype=float), value=float(value), grid_points=len(points), feasible_points=feasible)


@dataclass(slots=True)
class MPReport:
    instance: str
    x: np.ndarray
    objective: float
    violation: float
    multipliers: MultiplierResult
    second_order: SecondOrderResult
    cone_rejected: int
    brute_force: BruteForceResult | None = None
    interpretation: str = ""

    def to_dict(self) -> dict[str, Any]:
        return {
            "instance": self.instance,
            "x": self.x.tolist(),
            "objective": self.objective,
            "violation": self.violation,
            "multipliers": self.multipliers.to_dict(),
            "second_order": self.second_order.to_dict(),
            "cone_rejected": self.cone_rejected,
            "brute_force": self.brute_force.to_dict() if self.brute_force else None,
            "interpretation": self.interpretation,
        }


def audit_point(
    problem: MPProblem,
    x: np.ndarray,
    normalize_lambda: bool = True,
    samples: int = 200,
    seed: int = 42,
    box: list[tuple[float, float]] | None = None,
    grid_points: int = 41,
) -> MPReport:
    x = np.asarray(x, dtype=float)
    mult = find_multipliers(problem, x, normalize_lambda)
    cone = critical_cone_sample(problem, x, mult, samples, seed)
    second = second_order_check(problem, x, mult, cone)
    brute = brute_force_optimum(problem, box, grid_points) if box is not None else None
    report = MPReport(
        instance=problem.name,
        x=x,
        objective=float(problem.f(x)),
        violation=problem.violation(x),
        multipliers=mult,
        second_order=second,
        cone_rejected=cone.rejected,
        brute_force=brute,
    )
    report.interpretation = _interpret(report)
    return report


def _interpret(report: MPReport) -> str:
    if not report.multipliers.found:
        return "No Lagrange multiplier satisfies stationarity; the candidate is not a KKT point."
    if not report.multipliers.normal:
        return "Only abnormal multipliers exist; the objective does not enter the optimality system."
    if not report.second_order.necessary:
        return "KKT point with negative curvature on the critical cone; not a local minimizer."
    if report.brute_force is not None and report.brute_force.value < report.objective - 1e-8:
        return "Local conditions hold but the brute-force scan finds a lower feasible value."
    if report.second_order.sufficient:
        return "KKT point with positive curvature on the critical cone; strict local minimizer."
    return "KKT point satisfying the necessary second-order condition."
