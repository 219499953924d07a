import numpy as np
import pytest

from src.core.optimality import (
    MultiplierSet,
    collocated_adjoint,
    compute_multipliers,
    kkt_residuals,
    lagrangian_value,
    recover_e,
    solve_adjoint,
    solve_phi_scalar,
    transport_consistency,
    transport_multipliers,
)
from src.core.optimizer import gradient
from src.discretization.grid import build_grid_from_extent
from src.scenarios.bundled import ScenarioKind
from src.scenarios.loader import build_from_scenario
from src.solvers.fields import SpaceTimeField
from src.solvers.reduction import ControlPoint, objective_reduced, reduced_state
from src.solvers.state import march_linearized, operator_for


def _objective(spec, grid, cp, op):
    return objective_reduced(spec, grid, cp, reduced_state(spec, grid, cp, op))


@pytest.fixture
def tv_setup(time_varying, random_point):
    _, spec, grid = time_varying
    return spec, grid, random_point(grid, 1.0, seed=3), operator_for(spec, grid)


def test_horizon_derivative_matches_finite_difference(tv_setup):
    spec, grid, cp, op = tv_setup
    dT, _ = gradient(spec, grid, cp, op)
    eps = 1e-5
    plus = _objective(spec, grid, ControlPoint(cp.T + eps, cp.v), op)
    minus = _objective(spec, grid, ControlPoint(cp.T - eps, cp.v), op)
    assert (plus - minus) / (2 * eps) == pytest.approx(dT, rel=1e-6, abs=1e-8)


FD_SWEEP = (1e-3, 1e-4, 1e-5, 1e-6, 1e-7)


def _best_relative_error(func, exact: float) -> float:
    """Smallest central-difference error over the step sweep, relative to max(1, |exact|)."""
    errors = [abs((func(eps) - func(-eps)) / (2.0 * eps) - exact) for eps in FD_SWEEP]
    return min(errors) / max(1.0, abs(exact))


@pytest.mark.parametrize("seed", range(20))
def test_control_gradient_matches_directional_difference(tv_setup, seed):
    spec, grid, cp, op = tv_setup
    _, density = gradient(spec, grid, cp, op)
    v_hat = np.random.default_rng(100 + seed).standard_normal(cp.v.values.shape)
    exact = float(np.sum(grid.time_weights[:, None] * grid.weight * density.values * v_hat))

    def shifted(eps: float) -> float:
        return _objective(spec, grid, ControlPoint(cp.T, cp.v.with_values(cp.v.values + eps * v_hat)), op)

    assert _best_relative_error(shifted, exact) <= 1e-6


@pytest.mark.parametrize("kind", list(ScenarioKind))
def test_gradient_matches_finite_differences_on_bundled_scenarios(generator, random_point, kind):
    spec, grid = build_from_scenario(generator.generate(kind))
    op = operator_for(spec, grid)
    cp = random_point(grid, 0.5 * (spec.T_lo + spec.T_hi), seed=9)
    dT, density = gradient(spec, grid, cp, op)

    def along_T(eps: float) -> float:
        return _objective(spec, grid, ControlPoint(cp.T + eps, cp.v), op)

    assert _best_relative_error(along_T, dT) <= 1e-6

    v_hat = np.random.default_rng(29).standard_normal(cp.v.values.shape)
    exact = float(np.sum(grid.time_weights[:, None] * grid.weight * density.values * v_hat))

    def along_v(eps: float) -> float:
        return _objective(spec, grid, ControlPoint(cp.T, cp.v.with_values(cp.v.values + eps * v_hat)), op)

    assert _best_relative_error(along_v, exact) <= 1e-6



def test_dummy_level_carries_no_gradient(make_spec, random_point):
    spec = make_spec(("psi-zero", {}), ("cost-tracking-quadratic", {"beta": 0.1}), ("g-identity", {}))
    grid = build_grid_from_extent((1.0,), (7,), 6, theta=1.0)
    _, density = gradient(spec, grid, random_point(grid, 1.0))
    assert np.all(density.values[0] == 0.0)


def test_multiplier_recursions_are_self_consistent(tv_setup):
    spec, grid, cp, op = tv_setup
    zeta = reduced_state(spec, grid, cp, op)
    M = compute_multipliers(spec, grid, cp, zeta, op=op)
    report = kkt_residuals(spec, grid, cp, zeta, M, op)
    assert report.r_adj <= 1e-10
    assert report.r_phi <= 1e-12
    assert M.phi_scalar[-1] == 0.0
    assert report.fd_crosschecks["fd_relative_error"] <= 1e-5
    assert set(report.fd_crosschecks) >= {"dT_exact", "dT_fd", "fd_step", "reduced_form", "matches"}


def test_lagrangian_reduces_to_objective_without_constraints(tv_setup):
    spec, grid, cp, op = tv_setup
    zeta = reduced_state(spec, grid, cp, op)
    value = lagrangian_value(spec, grid, cp, zeta, 1.0, np.zeros(0), SpaceTimeField.zeros(grid))
    assert value == pytest.approx(objective_reduced(spec, grid, cp, zeta), abs=1e-14)


def test_collocated_adjoint_of_constant_field_is_constant():
    grid = build_grid_from_extent((1.0,), (5,), 4, theta=0.5)
    q = np.ones((grid.levels, grid.n_interior))
    np.testing.assert_allclose(collocated_adjoint(grid, q), q)


def test_solution_satisfies_kkt_and_sign_conditions(lq_fixed, lq_fixed_result):
    _, spec, grid = lq_fixed
    result = lq_fixed_result
    assert result.kkt.passes(1e-6, 1e-6)
    e = result.multipliers.e_field.values
    v = result.cp.v.values
    tol = 1e-8 * (spec.b - spec.a)
    active = grid.active_levels[:, None]
    assert np.all(e[active & (v >= spec.b - tol)] >= -1e-12)
    assert np.all(e[active & (v <= spec.a + tol)] <= 1e-12)
    interior = active & (v > spec.a + tol) & (v < spec.b - tol)
    assert np.all(e[interior] == 0.0)


def test_transported_multipliers_reproduce_reduced_residuals(lq_fixed, lq_fixed_result):
    _, spec, grid = lq_fixed
    result = lq_fixed_result
    op = operator_for(spec, grid)
    report = kkt_residuals(spec, grid, result.cp, result.state, result.multipliers, op, with_fd=False)
    consistency = transport_consistency(spec, grid, result.cp, result.state, result.multipliers, report, op)
    assert consistency["r_u_discrepancy"] <= 1e-10
    assert consistency["r_adj_discrepancy"] <= 1e-10
    assert consistency["r_phi_discrepancy"] <= 1e-10


def test_transport_divides_the_mixed_multiplier_by_the_horizon(tv_setup):
    spec, grid, cp, op = tv_setup
    zeta = reduced_state(spec, grid, cp, op)
    M = compute_multipliers(spec, grid, cp, zeta, op=op)
    constant_e = MultiplierSet(M.lam, M.mu, M.adjoint, M.phi_scalar, SpaceTimeField.constant(grid, 2.0))
    physical = transport_multipliers(constant_e, 4.0)
    np.testing.assert_allclose(physical.e_field.values, 0.5)
    assert physical.adjoint.horizon == 4.0


def test_mixed_multiplier_at_the_upper_bound(make_spec):
    beta = 0.2
    spec = make_spec(("psi-zero", {}), ("cost-tracking-quadratic", {"beta": beta}), ("g-identity", {}), ("init-sine", {}))
    grid = build_grid_from_extent((1.0,), (7,), 6)
    T, b, phi = 1.5, spec.b, 5.0
    upper = ControlPoint(T=T, v=SpaceTimeField.constant(grid, b))
    zeta = reduced_state(spec, grid, upper)
    adjoint = SpaceTimeField.constant(grid, phi)
    recovered = recover_e(spec, grid, upper, zeta, adjoint, 1.0)
    np.testing.assert_allclose(recovered.field.values, T * (phi - beta * b), rtol=1e-13)
    assert recovered.discarded_sup == 0.0

    lower = ControlPoint(T=T, v=SpaceTimeField.constant(grid, spec.a))
    wrong_sign = recover_e(spec, grid, lower, reduced_state(spec, grid, lower), adjoint, 1.0)
    assert wrong_sign.field.sup_norm() == 0.0
    assert wrong_sign.discarded_sup == pytest.approx(T * (phi - beta * spec.a))


def test_time_adjoint_for_constant_time_drift(make_spec, random_point):
    drift = 0.7
    spec = make_spec(("psi-zero", {}), ("cost-time", {"gamma": 1.0, "drift": drift}), ("g-identity", {}))
    grid = build_grid_from_extent((1.0,), (9,), 8)
    cp = random_point(grid, 1.3, seed=2)
    zeta = reduced_state(spec, grid, cp)
    phi = solve_phi_scalar(spec, grid, cp, zeta, SpaceTimeField.zeros(grid), 1.0, SpaceTimeField.zeros(grid))
    np.testing.assert_allclose(phi, drift * cp.T * grid.measure * (1.0 - grid.s), atol=1e-13)
    assert phi[-1] == 0.0


def test_adjoint_terminal_datum_is_minus_final_state(make_spec, random_point):
    spec = make_spec(
        ("psi-zero", {}),
        ("cost-time", {"gamma": 0.0}),
        ("g-identity", {}),
        ("init-sine", {}),
        ("terminal-time-energy", {"time_weight": 1.0, "state_weight": 1.0}),
    )
    grid = build_grid_from_extent((1.0,), (9,), 8)
    cp = random_point(grid, 0.8, seed=4)
    zeta = reduced_state(spec, grid, cp)
    adjoint = solve_adjoint(spec, grid, cp, zeta, 1.0, np.zeros(0), SpaceTimeField.zeros(grid))
    np.testing.assert_array_equal(adjoint.values[-1], -zeta.terminal)


def test_adjoint_equals_time_reversed_forward_solve(make_spec, random_point):
    spec = make_spec(
        ("psi-zero", {}),
        ("cost-tracking-quadratic", {"alpha": 1.0, "beta": 0.1, "target_amplitude": 1.0}),
        ("g-identity", {}),
        ("init-sine", {}),
    )
    grid = build_grid_from_extent((1.0,), (11,), 10, theta=1.0)
    cp = random_point(grid, 0.9, seed=6)
    op = operator_for(spec, grid)
    zeta = reduced_state(spec, grid, cp, op)
    adjoint = solve_adjoint(spec, grid, cp, zeta, 1.0, np.zeros(0), SpaceTimeField.zeros(grid), op)

    L_y = spec.running_cost("y", grid.coords, (cp.T * grid.s)[:, None], zeta.values, cp.v.values)
    # Reversed level j carries the source of physical level N + 1 - j; level 0 never enters with θ = 1.
    rhs = np.zeros_like(L_y)
    rhs[1:] = -L_y[::-1][:-1]
    zero = np.zeros((grid.levels, grid.n_interior))
    reversed_forward = march_linearized(op, grid, cp.T, zero, rhs, np.zeros(grid.n_interior))
    np.testing.assert_allclose(adjoint.values, reversed_forward[::-1], atol=1e-11)


def test_horizon_residual_is_projected_onto_the_bracket(time_varying, random_point):
    _, spec, grid = time_varying
    op = operator_for(spec, grid)
    for T in (1.0, spec.T_lo, spec.T_hi):
        cp = random_point(grid, T, seed=3)
        zeta = reduced_state(spec, grid, cp, op)
        report = kkt_residuals(spec, grid, cp, zeta, compute_multipliers(spec, grid, cp, zeta, op=op), op, with_fd=False)
        room_down, room_up = T - spec.T_lo, spec.T_hi - T
        expected = min(report.dT, room_down) if report.dT >= 0.0 else min(-report.dT, room_up)
        assert report.r_T == pytest.approx(expected, rel=1e-12, abs=1e-14)
