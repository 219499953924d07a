from collections.abc import Callable, Iterable
from dataclasses import dataclass

import numpy as np

DEFAULT_STEPS = (1e-3, 1e-4, 1e-5)


@dataclass(frozen=True, slots=True)
class FDMatch:
    exact: float
    fd: float
    step: float
    error: float

    def within(self, tol: float) -> bool:
        return self.error <= tol * max(1.0, abs(self.exact))


def central_difference(fn: Callable[[float], float], h: float) -> float:
    """(f(h) - f(-h)) / 2h for a function of the offset along a line."""
    return (fn(h) - fn(-h)) / (2.0 * h)


def second_difference(fn: Callable[[float], float], h: float, base: float | None = None) -> float:
    centre = fn(0.0) if base is None else base
    return (fn(h) - 2.0 * centre + fn(-h)) / h**2


def best_match(
    estimate: Callable[[float], float], exact: float, steps: Iterable[float] = DEFAULT_STEPS
) -> FDMatch:
    """Sweep step sizes and keep the estimate closest to the analytic value."""
    best: FDMatch | None = None
    for h in steps:
        fd = float(estimate(h))
        error = abs(fd - exact) if np.isfinite(fd) else np.inf
        if best is None or error < best.error:
            best = FDMatch(exact=float(exact), fd=fd, step=float(h), error=float(error))
    if best is None:
        raise ValueError("at least one finite-difference step is required")
    return best


def directional_derivative(
    fn: Callable[[float], float], exact: float, steps: Iterable[float] = DEFAULT_STEPS
) -> FDMatch:
    return best_match(lambda h: central_difference(fn, h), exact, steps)


def directional_curvature(
    fn: Callable[[float], float], exact: float, steps: Iterable[float] = DEFAULT_STEPS
) -> FDMatch:
    base = fn(0.0)
    return best_match(lambda h: second_difference(fn, h, base), exact, steps)
