import numpy as np
import pytest

from src.core.optimizer import Termination, dense_qp_oracle, growth_certificate, project_box, solve
from src.scenarios.loader import build_from_scenario
from src.schemas.scenario import SolverConfig, SolverMode


def test_fixed_horizon_solution_matches_dense_oracle(lq_fixed, lq_fixed_result):
    _, spec, grid = lq_fixed
    result = lq_fixed_result
    assert result.converged
    assert result.mode is SolverMode.PROJECTED_GRADIENT
    assert result.cp.T == 1.0
    oracle = dense_qp_oracle(spec, grid, 1.0)
    np.testing.assert_allclose(result.cp.v.values, oracle, atol=1e-6)
    assert max(result.kkt.r_u, result.kkt.r_T, result.kkt.r_comp, result.kkt.r_feas) <= 1e-6


def test_result_serializes_trace_and_multipliers(lq_fixed_result):
    payload = lq_fixed_result.to_dict()
    assert payload["termination"] == "converged"
    assert payload["iterations"] == len(payload["trace"]) > 0
    assert set(payload["trace"][0]) >= {"iteration", "merit", "T", "projected_gradient", "step"}
    assert payload["multipliers"]["lambda"] == 1.0
    assert payload["multipliers"]["mu"] == []


def test_free_horizon_converges_inside_bracket(generator):
    scenario = generator.generate_lq_free_T()
    spec, grid = build_from_scenario(scenario)
    result = solve(spec, grid, scenario.solver)
    assert result.termination is Termination.CONVERGED
    assert spec.T_lo <= result.cp.T <= spec.T_hi
    assert result.kkt.r_T <= scenario.solver.grad_tol


def test_stationary_saddle_start_stops_immediately(generator):
    scenario = generator.generate_adversarial_saddle()
    spec, grid = build_from_scenario(scenario)
    result = solve(spec, grid, scenario.solver)
    assert result.converged
    assert len(result.trace) == 1
    assert np.all(result.cp.v.values == 0.0)


def test_project_box_clips_and_rejects_empty_box():
    np.testing.assert_array_equal(project_box(np.array([-3.0, 0.2, 5.0]), -1.0, 1.0), [-1.0, 0.2, 1.0])
    with pytest.raises(ValueError):
        project_box(np.zeros(2), 1.0, 1.0)


def test_projected_gradient_mode_requires_simple_constraints(generator):
    scenario = generator.generate_example31()
    spec, grid = build_from_scenario(scenario)
    with pytest.raises(ValueError, match="projected-gradient"):
        solve(spec, grid, SolverConfig(mode=SolverMode.PROJECTED_GRADIENT))


def test_oracle_rejects_nonlinear_dynamics(generator):
    spec, grid = build_from_scenario(generator.generate_cubic_2d())
    with pytest.raises(ValueError):
        dense_qp_oracle(spec, grid, 0.5)


def test_growth_certificate_is_positive_for_strictly_convex_problem(lq_fixed, lq_fixed_result):
    _, spec, grid = lq_fixed
    report = growth_certificate(spec, grid, lq_fixed_result, radius=0.5, n_probes=20, seed=3)
    assert not report.flagged
    assert report.kappa_hat > 0.0
    assert report.accepted + report.discarded_infeasible + report.discarded_outside_radius + report.excluded_zero == 20
    assert report.to_dict()["seed"] == 3


def test_growth_certificate_rejects_nonpositive_radius(lq_fixed, lq_fixed_result):
    _, spec, grid = lq_fixed
    with pytest.raises(ValueError):
        growth_certificate(spec, grid, lq_fixed_result, radius=0.0, n_probes=1)


@pytest.fixture(scope="module")
def norm_reduction(generator):
    scenario = generator.generate_norm_reduction(1.0)
    spec, grid = build_from_scenario(scenario)
    return scenario, spec, grid, solve(spec, grid, scenario.solver)


@pytest.mark.slow
def test_norm_reduction_hits_the_target_ball(norm_reduction):
    _, spec, grid, result = norm_reduction
    assert result.converged
    assert result.mode is SolverMode.AUGMENTED_LAGRANGIAN
    psi = spec.terminal_constraints[0].value(result.cp.T, result.state.terminal, grid.weight)
    assert abs(psi) <= 1e-6
    assert result.multipliers.mu[0] > 0.0


@pytest.mark.slow
def test_larger_control_box_never_lengthens_the_minimal_time(generator):
    horizons = []
    for scenario in generator.norm_reduction_sweep((1.0, 2.0, 4.0)):
        spec, grid = build_from_scenario(scenario)
        result = solve(spec, grid, scenario.solver)
        assert result.converged, scenario.name
        horizons.append(result.cp.T)
    assert all(later <= earlier + 1e-6 for earlier, later in zip(horizons, horizons[1:]))


@pytest.mark.slow
def test_minimal_time_control_is_bang_bang(norm_reduction):
    _, spec, grid, result = norm_reduction
    v = result.cp.v.values[grid.active_levels]
    tol = 1e-6 * (spec.b - spec.a)
    at_bound = (v <= spec.a + tol) | (v >= spec.b - tol)
    assert at_bound.mean() >= 0.9


@pytest.mark.slow
def test_growth_certificate_near_minimal_time(norm_reduction):
    scenario, spec, grid, result = norm_reduction
    wide = growth_certificate(spec, grid, result, radius=1e-2, n_probes=200, seed=17, feas_tol=scenario.solver.feas_tol)
    assert not wide.flagged
    assert wide.kappa_hat > 0.0
    assert wide.accepted > 0

    narrow = growth_certificate(spec, grid, result, radius=1e-3, n_probes=200, seed=17, feas_tol=scenario.solver.feas_tol)
    assert not narrow.flagged
    assert narrow.kappa_hat >= wide.kappa_hat - 1e-8 * max(1.0, abs(wide.kappa_hat))
