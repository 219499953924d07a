import numpy as np
import pytest

from src.mp.core import (
    OracleRefusedError,
    audit_point,
    brute_force_optimum,
    critical_cone_sample,
    find_multipliers,
    lagrangian_gradient,
    second_order_check,
)
from src.mp.instances import build_instance


def _audit(name: str, params: dict | None = None, **kwargs):
    instance = build_instance(name, params)
    return audit_point(instance.problem, instance.candidate, box=instance.box, samples=50, seed=7, **kwargs)


def test_sphere_line_candidate_is_a_strict_minimizer():
    report = _audit("sphere-line")
    mult = report.multipliers
    assert mult.found and mult.normal and mult.mfcq
    assert mult.w == pytest.approx([-1.0])
    assert report.second_order.sufficient
    assert report.second_order.q_min == pytest.approx(2.0)
    assert report.brute_force.value == pytest.approx(0.5, abs=1e-6)
    np.testing.assert_allclose(report.brute_force.x, [0.5, 0.5], atol=1e-4)


def test_stationarity_residual_vanishes_at_recovered_multipliers():
    instance = build_instance("sphere-line", {"offset": 2.0})
    mult = find_multipliers(instance.problem, instance.candidate)
    grad = lagrangian_gradient(instance.problem, instance.candidate, mult.lam, mult.w, mult.l, mult.e)
    assert np.max(np.abs(grad)) <= 1e-12
    assert mult.w == pytest.approx([-2.0])


@pytest.mark.parametrize("slope", [0.5, 3.0])
def test_strictly_active_inequality_leaves_a_trivial_cone(slope):
    report = _audit("linear-halfline", {"slope": slope})
    assert report.multipliers.l == pytest.approx([slope])
    assert report.second_order.q_min is None
    assert report.second_order.necessary and report.second_order.sufficient
    assert report.cone_rejected == 0


def test_concave_interval_centre_is_not_a_minimizer():
    report = _audit("concave-interval")
    assert report.multipliers.found
    assert not report.second_order.necessary
    assert report.second_order.q_min == pytest.approx(-2.0)
    assert report.brute_force.value == pytest.approx(-1.0, abs=1e-9)
    assert "not a local minimizer" in report.interpretation


def test_convex_quadratic_minimizer_is_certified():
    report = _audit("convex-quadratic", {"Q": [[3.0, 1.0], [1.0, 2.0]], "c": [1.0, 1.0]})
    assert report.second_order.sufficient
    assert min(report.second_order.hessian_eigenvalues) > 0.0
    assert report.brute_force.value == pytest.approx(report.objective, abs=1e-8)


def test_degenerate_constraint_admits_only_abnormal_multipliers():
    instance = build_instance("degenerate-square")
    normalized = find_multipliers(instance.problem, instance.candidate, normalize_lambda=True)
    assert not normalized.found
    assert not normalized.mfcq
    assert normalized.abnormal_exists

    free = find_multipliers(instance.problem, instance.candidate, normalize_lambda=False)
    assert free.found and free.lam == 0.0
    assert not free.normal
    assert free.l[0] > 0.0


def test_brute_force_refuses_large_problems():
    instance = build_instance("convex-quadratic", {"Q": np.eye(5).tolist(), "c": [1.0] * 5})
    with pytest.raises(OracleRefusedError):
        brute_force_optimum(instance.problem, instance.box)


def test_brute_force_checks_box_dimension():
    instance = build_instance("sphere-line")
    with pytest.raises(ValueError, match="intervals"):
        brute_force_optimum(instance.problem, [(-1.0, 1.0)])


@pytest.mark.parametrize(
    ("name", "params"),
    [("no-such-instance", {}), ("linear-halfline", {"slope": -1.0}), ("convex-quadratic", {"Q": [[1.0, 0.0], [0.0, -1.0]]})],
)
def test_invalid_instances_are_rejected(name, params):
    with pytest.raises(ValueError):
        build_instance(name, params)


def test_report_serializes_every_section():
    payload = _audit("sphere-line").to_dict()
    assert set(payload) >= {"instance", "x", "multipliers", "second_order", "brute_force", "interpretation"}
    assert payload["multipliers"]["method"] == "active-set-enumeration"
    assert payload["second_order"]["necessary_holds"] is True


def test_bundled_brute_force_optima_pass_first_and_second_order_checks(generator):
    for instance_file in generator.generate_mp_instances():
        instance = build_instance(instance_file.instance, instance_file.params)
        box = list(instance_file.brute_force.box)
        optimum = brute_force_optimum(instance.problem, box, instance_file.brute_force.grid_points)
        mult = find_multipliers(instance.problem, optimum.x)
        assert mult.found and mult.normal, instance_file.instance
        assert mult.residual <= 1e-8, instance_file.instance

        cone = critical_cone_sample(instance.problem, optimum.x, mult, 200, seed=instance_file.seed)
        second = second_order_check(instance.problem, optimum.x, mult, cone)
        assert second.necessary, instance_file.instance
        assert second.q_min is None or second.q_min >= -1e-8, instance_file.instance
        if instance_file.instance == "concave-interval":
            assert abs(optimum.x[0]) == pytest.approx(1.0)
            assert cone.trivial


def test_cone_sampling_needs_at_least_one_direction():
    instance = build_instance("sphere-line")
    mult = find_multipliers(instance.problem, instance.candidate)
    with pytest.raises(ValueError, match="at least one sample"):
        critical_cone_sample(instance.problem, instance.candidate, mult, 0)
