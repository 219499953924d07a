import numpy as np
import pytest

from src.discretization.grid import build_grid_from_extent
from src.solvers.fields import SpaceTimeField
from src.solvers.reduction import (
    ControlPoint,
    HorizonMismatchError,
    PhysicalDirection,
    ReducedDirection,
    definition_distance,
    direction_state,
    from_reduced,
    linearized_residual_physical,
    linearized_residual_reduced,
    objective_physical,
    objective_reduced,
    reduced_state,
    resample,
    to_reduced,
    transport_direction,
)
from src.solvers.state import operator_for


@pytest.fixture
def tv_point(time_varying, random_point):
    _, spec, grid = time_varying
    cp = random_point(grid, 1.0, seed=7)
    op = operator_for(spec, grid)
    return spec, grid, cp, reduced_state(spec, grid, cp, op), op


def _random_direction(grid, seed: int) -> tuple[float, np.ndarray]:
    rng = np.random.default_rng(seed)
    return float(rng.uniform(-1.0, 1.0)), rng.standard_normal((grid.levels, grid.n_interior))


def test_horizon_tags_are_enforced():
    grid = build_grid_from_extent((1.0,), (5,), 4)
    physical = SpaceTimeField.zeros(grid, 1.0)
    with pytest.raises(HorizonMismatchError):
        to_reduced(physical, 2.0)
    with pytest.raises(HorizonMismatchError):
        from_reduced(physical, 1.0)
    with pytest.raises(HorizonMismatchError):
        ControlPoint(T=1.0, v=physical)
    with pytest.raises(ValueError):
        from_reduced(SpaceTimeField.zeros(grid), 0.0)


def test_transport_round_trip_and_objective_invariance(tv_point):
    spec, grid, cp, zeta, _ = tv_point
    u = from_reduced(cp.v, cp.T)
    np.testing.assert_array_equal(to_reduced(u, cp.T).values, cp.v.values)
    y = from_reduced(zeta, cp.T)
    assert objective_physical(spec, grid, cp.T, y, u) == pytest.approx(objective_reduced(spec, grid, cp, zeta), abs=1e-12)
    with pytest.raises(HorizonMismatchError):
        objective_physical(spec, grid, 2.0 * cp.T, y, u)


def test_direction_state_matches_central_difference(tv_point):
    spec, grid, cp, zeta, op = tv_point
    T_hat, v_hat = _random_direction(grid, 11)
    linear = direction_state(spec, grid, cp, zeta, T_hat, v_hat, op)
    eps = 1e-5

    def shifted(sign: float) -> np.ndarray:
        point = ControlPoint(T=cp.T + sign * eps * T_hat, v=cp.v.with_values(cp.v.values + sign * eps * v_hat))
        return reduced_state(spec, grid, point, op).values

    fd = (shifted(1.0) - shifted(-1.0)) / (2.0 * eps)
    assert np.max(np.abs(fd - linear.values)) <= 1e-6 * max(1.0, linear.sup_norm())


def test_direction_state_solves_the_linearized_scheme(tv_point):
    spec, grid, cp, zeta, op = tv_point
    T_hat, v_hat = _random_direction(grid, 13)
    zeta_hat = direction_state(spec, grid, cp, zeta, T_hat, v_hat, op)
    direction = ReducedDirection(T_hat, zeta_hat, cp.v.with_values(v_hat))
    assert linearized_residual_reduced(spec, grid, cp, zeta, direction, op) <= 1e-10

    broken = ReducedDirection(T_hat, zeta_hat.scaled(1.5), direction.v_hat)
    assert linearized_residual_reduced(spec, grid, cp, zeta, broken, op) > 1e-6


def test_physical_and_reduced_residuals_agree(tv_point):
    spec, grid, cp, zeta, op = tv_point
    T_hat, v_hat = _random_direction(grid, 17)
    zeta_hat = direction_state(spec, grid, cp, zeta, T_hat, v_hat, op).with_values(
        np.random.default_rng(19).standard_normal((grid.levels, grid.n_interior))
    )
    reduced = ReducedDirection(T_hat, zeta_hat, cp.v.with_values(v_hat))
    physical = PhysicalDirection(T_hat, from_reduced(zeta_hat, cp.T), from_reduced(reduced.v_hat, cp.T))
    r_reduced = linearized_residual_reduced(spec, grid, cp, zeta, reduced, op)
    r_physical = linearized_residual_physical(
        spec, grid, cp.T, from_reduced(zeta, cp.T), from_reduced(cp.v, cp.T), physical, op
    )
    assert r_physical == pytest.approx(r_reduced, rel=1e-12, abs=1e-12)


def test_reduced_direction_arithmetic():
    grid = build_grid_from_extent((1.0,), (5,), 4)
    d = ReducedDirection(2.0, SpaceTimeField.constant(grid, 1.0), SpaceTimeField.constant(grid, -1.0))
    doubled = d + d
    assert doubled.T_hat == 4.0
    np.testing.assert_allclose(doubled.xi_hat, 4.0 * grid.s)
    assert (doubled - d.scaled(2.0)).zeta_hat.sup_norm() == 0.0


def test_definition_distance_for_constant_fields():
    coarse = build_grid_from_extent((1.0,), (5,), 4)
    fine = build_grid_from_extent((1.0,), (5,), 8)
    y1, u1 = SpaceTimeField.constant(coarse, 1.0, 1.0), SpaceTimeField.constant(coarse, 0.5, 1.0)
    y2, u2 = SpaceTimeField.constant(fine, 1.0, 1.3), SpaceTimeField.constant(fine, 0.25, 1.3)
    assert definition_distance(1.0, y1, u1, 1.3, y2, u2) == pytest.approx(0.3 + 0.25)
    assert definition_distance(1.0, y1, u1, 1.0, y1, u1) == 0.0


def test_resample_is_exact_on_linear_data():
    grid = build_grid_from_extent((1.0,), (5,), 4)
    field = SpaceTimeField.from_function(grid, lambda x, t: 2.0 + 3.0 * t + x[:, 0])
    finer = resample(field, 16)
    assert finer.grid.n_steps == 16
    expected = 2.0 + 3.0 * finer.grid.s[:, None] + finer.grid.coords[:, 0]
    np.testing.assert_allclose(finer.values, expected, atol=1e-14)


def test_transport_of_zero_and_horizon_only_directions():
    grid = build_grid_from_extent((1.0,), (7,), 6)
    T_star = 1.4
    zero = transport_direction(PhysicalDirection(0.0, SpaceTimeField.zeros(grid, T_star), SpaceTimeField.zeros(grid, T_star)), T_star)
    assert zero.T_hat == 0.0
    assert zero.zeta_hat.sup_norm() == 0.0 and zero.v_hat.sup_norm() == 0.0
    assert zero.zeta_hat.is_reduced and zero.v_hat.is_reduced

    horizon_only = transport_direction(
        PhysicalDirection(0.7, SpaceTimeField.zeros(grid, T_star), SpaceTimeField.zeros(grid, T_star)), T_star
    )
    assert horizon_only.T_hat == 0.7
    assert horizon_only.zeta_hat.sup_norm() == 0.0 and horizon_only.v_hat.sup_norm() == 0.0
    np.testing.assert_allclose(horizon_only.xi_hat, 0.7 * grid.s)

    with pytest.raises(HorizonMismatchError):
        transport_direction(PhysicalDirection(0.0, SpaceTimeField.zeros(grid, 1.0), SpaceTimeField.zeros(grid, 1.0)), T_star)


def test_transported_direction_keeps_solving_the_linearized_scheme(tv_point):
    spec, grid, cp, zeta, op = tv_point
    T_hat, v_hat = _random_direction(grid, 23)
    zeta_hat = direction_state(spec, grid, cp, zeta, T_hat, v_hat, op)
    physical = PhysicalDirection(T_hat, from_reduced(zeta_hat, cp.T), from_reduced(cp.v.with_values(v_hat), cp.T))
    r_physical = linearized_residual_physical(
        spec, grid, cp.T, from_reduced(zeta, cp.T), from_reduced(cp.v, cp.T), physical, op
    )
    assert r_physical <= 1e-10

    reduced = transport_direction(physical, cp.T)
    assert reduced.T_hat == T_hat
    np.testing.assert_array_equal(reduced.zeta_hat.values, zeta_hat.values)
    assert linearized_residual_reduced(spec, grid, cp, zeta, reduced, op) <= 1e-10
