"""Small named programs with known answers, used to exercise the finite-dimensional checks."""

from collections.abc import Callable
from dataclasses import dataclass
from enum import Enum
from typing import Any

import numpy as np

from src.mp.core import MPProblem


class MPInstanceKind(str, Enum):
    SPHERE_LINE = "sphere-line"
    LINEAR_HALFLINE = "linear-halfline"
    CONCAVE_INTERVAL = "concave-interval"
    CONVEX_QUADRATIC = "convex-quadratic"
    DEGENERATE_SQUARE = "degenerate-square"


@dataclass(slots=True)
class MPInstance:
    problem: MPProblem
    candidate: np.ndarray
    box: list[tuple[float, float]]


def _sphere_line(params: dict[str, Any]) -> MPInstance:
    offset = float(params.get("offset", 1.0))
    problem = MPProblem(
        name=MPInstanceKind.SPHERE_LINE.value,
        n=2,
        f=lambda x: float(x @ x),
        grad_f=lambda x: 2.0 * x,
        hess_f=lambda x: 2.0 * np.eye(2),
        F=(
            lambda x: np.array([x[0] + x[1] - offset]),
            lambda x: np.array([[1.0, 1.0]]),
            lambda x: np.zeros((1, 2, 2)),
        ),
    )
    return MPInstance(problem, np.array([offset / 2.0, offset / 2.0]), [(-2.0, 2.0), (-2.0, 2.0)])


def _linear_halfline(params: dict[str, Any]) -> MPInstance:
    slope = float(params.get("slope", 1.0))
    if slope <= 0.0:
        raise ValueError(f"linear-halfline needs slope > 0, got {slope}")
    problem = MPProblem(
        name=MPInstanceKind.LINEAR_HALFLINE.value,
        n=1,
        f=lambda x: float(slope * x[0]),
        grad_f=lambda x: np.array([slope]),
        hess_f=lambda x: np.zeros((1, 1)),
        H=(lambda x: np.array([-x[0]]), lambda x: np.array([[-1.0]]), lambda x: np.zeros((1, 1, 1))),
    )
    return MPInstance(problem, np.array([0.0]), [(0.0, 2.0)])


def _concave_interval(params: dict[str, Any]) -> MPInstance:
    half_width = float(params.get("half_width", 1.0))
    problem = MPProblem(
        name=MPInstanceKind.CONCAVE_INTERVAL.value,
        n=1,
        f=lambda x: float(-x[0] ** 2),
        grad_f=lambda x: np.array([-2.0 * x[0]]),
        hess_f=lambda x: np.array([[-2.0]]),
        G=(lambda x: np.array([x[0]]), lambda x: np.array([[1.0]]), lambda x: np.zeros((1, 1, 1))),
        G_lo=np.array([-half_width]),
        G_hi=np.array([half_width]),
    )
    return MPInstance(problem, np.array([0.0]), [(-half_width, half_width)])


def _convex_quadratic(params: dict[str, Any]) -> MPInstance:
    Q = np.array(params.get("Q", [[2.0, 0.5], [0.5, 1.0]]), dtype=float)
    c = np.array(params.get("c", [1.0, -1.0]), dtype=float)
    if Q.shape != (c.size, c.size) or np.linalg.eigvalsh(0.5 * (Q + Q.T)).min() <= 0.0:
        raise ValueError("convex-quadratic needs a positive definite Q matching c")
    problem = MPProblem(
        name=MPInstanceKind.CONVEX_QUADRATIC.value,
        n=c.size,
        f=lambda x: float(0.5 * x @ Q @ x - c @ x),
        grad_f=lambda x: Q @ x - c,
        hess_f=lambda x: Q,
    )
    candidate = np.linalg.solve(Q, c)
    box = [(float(v) - 2.0, float(v) + 2.0) for v in candidate]
    return MPInstance(problem, candidate, box)


def _degenerate_square(params: dict[str, Any]) -> MPInstance:
    problem = MPProblem(
        name=MPInstanceKind.DEGENERATE_SQUARE.value,
        n=1,
        f=lambda x: float(x[0]),
        grad_f=lambda x: np.array([1.0]),
        hess_f=lambda x: np.zeros((1, 1)),
        H=(lambda x: np.array([x[0] ** 2]), lambda x: np.array([[2.0 * x[0]]]), lambda x: np.array([[[2.0]]])),
    )
    return MPInstance(problem, np.array([0.0]), [(-1.0, 1.0)])


INSTANCE_BUILDERS: dict[MPInstanceKind, Callable[[dict[str, Any]], MPInstance]] = {
    MPInstanceKind.SPHERE_LINE: _sphere_line,
    MPInstanceKind.LINEAR_HALFLINE: _linear_halfline,
    MPInstanceKind.CONCAVE_INTERVAL: _concave_interval,
    MPInstanceKind.CONVEX_QUADRATIC: _convex_quadratic,
    MPInstanceKind.DEGENERATE_SQUARE: _degenerate_square,
}


def build_instance(name: str, params: dict[str, Any] | None = None) -> MPInstance:
    try:
        kind = MPInstanceKind(name)
    except ValueError as exc:
        raise ValueError(f"Unknown MP instance: {name}") from exc
    return INSTANCE_BUILDERS[kind](params or {})
