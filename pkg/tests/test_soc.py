import numpy as np
import pytest

from src.core.optimality import compute_multipliers, transport_multipliers
from src.core.optimizer import solve
from src.detectors.soc_analyzer import SecondOrderAnalyzer, physical_second_variation, soc_verdict
from src.scenarios.loader import build_from_scenario
from src.schemas.scenario import SOCConfig
from src.solvers.reduction import PhysicalDirection, from_reduced, reduced_state
from src.solvers.state import operator_for


@pytest.fixture
def tv_analyzer(time_varying, random_point):
    _, spec, grid = time_varying
    cp = random_point(grid, 1.0, seed=21)
    op = operator_for(spec, grid)
    zeta = reduced_state(spec, grid, cp, op)
    M = compute_multipliers(spec, grid, cp, zeta, op=op)
    return SecondOrderAnalyzer(spec, grid, cp, zeta, M, op)


def _direction(analyzer, seed: int):
    rng = np.random.default_rng(seed)
    return analyzer.direction(float(rng.standard_normal()), rng.standard_normal(analyzer.cp.v.values.shape))


def test_second_variation_is_quadratic(tv_analyzer):
    d1, d2 = _direction(tv_analyzer, 1), _direction(tv_analyzer, 2)
    q = tv_analyzer.second_variation(d1)
    assert tv_analyzer.second_variation(d1.scaled(2.0)) == pytest.approx(4.0 * q, rel=1e-12)
    assert tv_analyzer.bilinear(d1, d1) == pytest.approx(q, rel=1e-10)
    assert tv_analyzer.bilinear(d1, d2) == pytest.approx(tv_analyzer.bilinear(d2, d1), rel=1e-12, abs=1e-14)


@pytest.mark.parametrize("seed", [5, 6])
def test_second_variation_matches_second_difference_of_lagrangian(tv_analyzer, seed):
    match = tv_analyzer.second_difference(_direction(tv_analyzer, seed))
    assert match.within(1e-5), match


def test_physical_and_reduced_forms_agree(tv_analyzer):
    a = tv_analyzer
    d = _direction(a, 9)
    T = a.cp.T
    physical = PhysicalDirection(d.T_hat, from_reduced(d.zeta_hat, T), from_reduced(d.v_hat, T))
    value = physical_second_variation(
        a.spec, a.grid, T, from_reduced(a.zeta, T), from_reduced(a.cp.v, T), transport_multipliers(a.M, T), physical, a.op
    )
    assert value == pytest.approx(a.second_variation(d), rel=1e-10, abs=1e-12)


@pytest.mark.parametrize("seed", [1, 2])
def test_tracking_problem_passes_both_conditions(lq_fixed, lq_fixed_result, seed):
    _, spec, grid = lq_fixed
    report = soc_verdict(spec, grid, lq_fixed_result, SOCConfig(samples=40, seed=seed))
    assert report.necessary and report.sufficient
    assert report.legendre.infimum == pytest.approx(0.1)
    if report.q_min is not None:
        assert report.q_min > 0.0
    payload = report.to_dict()
    assert payload["necessary_holds"] and payload["sufficient_holds"]
    assert payload["seed"] == seed


def test_cone_samples_satisfy_the_cone_conditions(lq_fixed, lq_fixed_result):
    _, spec, grid = lq_fixed
    analyzer = SecondOrderAnalyzer.from_result(spec, grid, lq_fixed_result)
    for sample in analyzer.sample_critical_cone(10, seed=4):
        if sample.accepted:
            assert sample.residual <= 1e-9
            assert sample.direction.T_hat == 0.0
            assert np.all(sample.direction.v_hat.values[analyzer.strong] == 0.0)


def test_vanishing_control_cost_gives_degenerate_margin(generator, random_point):
    spec, grid = build_from_scenario(generator.generate_lq_beta_zero())
    cp = random_point(grid, 1.0, seed=2)
    op = operator_for(spec, grid)
    zeta = reduced_state(spec, grid, cp, op)
    analyzer = SecondOrderAnalyzer(spec, grid, cp, zeta, compute_multipliers(spec, grid, cp, zeta, op=op), op)
    legendre = analyzer.legendre_clebsch()
    assert legendre.infimum == 0.0
    report = analyzer.verdict(SOCConfig(samples=5))
    assert not report.sufficient
    assert "degenerate" in report.interpretation["legendre_clebsch"]


def test_saddle_point_fails_the_necessary_condition(generator):
    scenario = generator.generate_adversarial_saddle()
    spec, grid = build_from_scenario(scenario)
    result = solve(spec, grid, scenario.solver)
    report = soc_verdict(spec, grid, result, SOCConfig(samples=20, seed=0))
    assert not report.necessary
    assert report.q_min < 0.0
    assert report.legendre.infimum < 0.0
    assert "not a local minimizer" in report.interpretation["necessary"]


def test_empty_sample_request_is_rejected(lq_fixed, lq_fixed_result):
    _, spec, grid = lq_fixed
    empty = SOCConfig().model_copy(update={"samples": 0})
    with pytest.raises(ValueError, match="at least one sample"):
        soc_verdict(spec, grid, lq_fixed_result, empty)
