import numpy as np
import pytest

from src.discretization.grid import build_grid_from_extent
from src.solvers.fields import SpaceTimeField
from src.solvers.state import (
    NewtonConvergenceError,
    march_state,
    operator_for,
    operator_residual,
    solve_linearized,
    forward_step,
    solve_state,
    sup_norm_bound_check,
    transposed_step,
)

HEAT = [("psi-zero", {}), ("cost-time", {}), ("g-identity", {}), ("init-sine", {"amplitude": 1.0})]


def _discrete_eigenvalue(grid) -> float:
    h = grid.spacing[0]
    return (2.0 - 2.0 * np.cos(np.pi * h)) / h**2


@pytest.mark.parametrize("theta", [0.5, 0.75, 1.0])
def test_free_heat_decay_matches_amplification_factor(make_spec, theta):
    spec = make_spec(*HEAT)
    grid = build_grid_from_extent((1.0,), (9,), 10, theta)
    T = 0.4
    y = solve_state(spec, grid, T, SpaceTimeField.zeros(grid, T))
    lam, h = _discrete_eigenvalue(grid), T * grid.step
    factor = (1.0 - h * (1.0 - theta) * lam) / (1.0 + h * theta * lam)
    expected = np.outer(factor ** np.arange(grid.levels), np.sin(np.pi * grid.coords[:, 0]))
    np.testing.assert_allclose(y.values, expected, atol=1e-12)


@pytest.mark.parametrize(("theta", "order"), [(0.5, 2.0), (1.0, 1.0)])
def test_temporal_convergence_order(make_spec, theta, order):
    spec = make_spec(*HEAT)
    T = 0.5
    errors = []
    for steps in (32, 64):
        grid = build_grid_from_extent((1.0,), (9,), steps, theta)
        y = march_state(spec, grid, T, np.zeros((grid.levels, grid.n_interior)))
        exact = np.exp(-_discrete_eigenvalue(grid) * T) * np.sin(np.pi * grid.coords[:, 0])
        errors.append(float(np.max(np.abs(y[-1] - exact))))
    assert np.log2(errors[0] / errors[1]) == pytest.approx(order, abs=0.15)


def test_semilinear_steps_satisfy_the_scheme(make_spec):
    spec = make_spec(("psi-cubic", {"coef": 2.0}), *HEAT[1:])
    grid = build_grid_from_extent((1.0,), (11,), 12, 0.5)
    T = 0.8
    controls = np.full((grid.levels, grid.n_interior), 1.5)
    z = march_state(spec, grid, T, controls)
    op = operator_for(spec, grid)
    F = operator_residual(spec, op, grid.coords, T * grid.s, z, controls)
    h = T * grid.step
    residual = z[1:] - z[:-1] + h * (0.5 * F[1:] + 0.5 * F[:-1])
    assert float(np.max(np.abs(residual))) < 1e-10


def test_newton_failure_names_the_step(make_spec):
    spec = make_spec(("psi-cubic", {"coef": 1.0}), *HEAT[1:])
    grid = build_grid_from_extent((1.0,), (7,), 4)
    with pytest.raises(NewtonConvergenceError) as info:
        march_state(spec, grid, 1.0, np.ones((grid.levels, grid.n_interior)), max_iters=0)
    assert info.value.step == 0
    assert info.value.residual > 0.0


def test_implicit_scheme_keeps_nonnegative_data_nonnegative(make_spec):
    spec = make_spec(("psi-cubic", {"coef": 1.0}), *HEAT[1:])
    grid = build_grid_from_extent((1.0,), (15,), 20, 1.0)
    y = solve_state(spec, grid, 1.0, SpaceTimeField.constant(grid, 0.5, 1.0))
    assert y.values.min() >= -1e-14


def test_nonpositive_horizon_is_rejected(make_spec):
    spec = make_spec(*HEAT)
    grid = build_grid_from_extent((1.0,), (5,), 4)
    with pytest.raises(ValueError, match="positive"):
        solve_state(spec, grid, 0.0, SpaceTimeField.zeros(grid, 0.0))


def test_linearized_solve_is_linear_in_the_source(make_spec):
    spec = make_spec(*HEAT)
    grid = build_grid_from_extent((1.0,), (9,), 8)
    rng = np.random.default_rng(5)
    c = SpaceTimeField(rng.uniform(0.0, 1.0, (grid.levels, grid.n_interior)), grid, 1.0)
    f1 = SpaceTimeField(rng.standard_normal((grid.levels, grid.n_interior)), grid, 1.0)
    f2 = SpaceTimeField(rng.standard_normal((grid.levels, grid.n_interior)), grid, 1.0)
    zero = np.zeros(grid.n_interior)
    combined = solve_linearized(spec, grid, 1.0, c, f1.scaled(2.0) + f2, zero)
    separate = solve_linearized(spec, grid, 1.0, c, f1, zero).scaled(2.0) + solve_linearized(spec, grid, 1.0, c, f2, zero)
    np.testing.assert_allclose(combined.values, separate.values, atol=1e-12)


def test_sup_norm_telemetry_is_finite(make_spec):
    spec = make_spec(*HEAT)
    grid = build_grid_from_extent((1.0,), (9,), 8)
    u = SpaceTimeField.constant(grid, 1.0, 1.0)
    y = solve_state(spec, grid, 1.0, u)
    ratio = sup_norm_bound_check(spec, y, u, spec.y0(grid.coords))
    assert np.isfinite(ratio) and 0.0 < ratio < 10.0


@pytest.mark.parametrize("theta", [0.5, 1.0])
@pytest.mark.parametrize(("extent", "counts"), [((1.0,), (11,)), ((1.0, 1.0), (6, 6))])
def test_step_transpose_identity(make_spec, theta, extent, counts):
    spec = make_spec(*HEAT, spatial_dim=len(extent))
    grid = build_grid_from_extent(extent, counts, 4, theta)
    op = operator_for(spec, grid)
    rng = np.random.default_rng(11)
    n = grid.n_interior
    c_old, c_new = rng.uniform(0.0, 2.0, n), rng.uniform(0.0, 2.0, n)
    x, y = rng.standard_normal(n), rng.standard_normal(n)
    h = 0.3 * grid.step
    lhs = forward_step(op, h, theta, c_old, c_new, x) @ y
    rhs = x @ transposed_step(op, h, theta, c_old, c_new, y)
    assert abs(lhs - rhs) <= 1e-12 * max(1.0, abs(lhs))


def _manufactured_control(x: np.ndarray, t: np.ndarray) -> np.ndarray:
    # y = e^{-t} sin(πx) solves y_t - y_xx + y³ = u for this u.
    profile = np.sin(np.pi * x)
    decay = np.exp(-t)
    return (np.pi**2 - 1.0) * decay * profile + (decay * profile) ** 3


@pytest.mark.parametrize(("theta", "min_order"), [(0.5, 1.9), (1.0, 0.9)])
def test_manufactured_cubic_solution_converges(make_spec, theta, min_order):
    spec = make_spec(("psi-cubic", {"coef": 1.0}), *HEAT[1:])
    T = 0.5
    errors = []
    for nodes, steps in ((9, 32), (17, 64), (33, 128)):
        grid = build_grid_from_extent((1.0,), (nodes,), steps, theta)
        x = grid.coords[:, 0]
        controls = _manufactured_control(x[None, :], (T * grid.s)[:, None])
        y = march_state(spec, grid, T, controls)
        exact = np.exp(-T * grid.s)[:, None] * np.sin(np.pi * x)[None, :]
        errors.append(float(np.max(np.abs(y - exact))))
    orders = np.log2(np.asarray(errors[:-1]) / np.asarray(errors[1:]))
    assert errors[-1] < errors[0]
    assert orders[-1] >= min_order
