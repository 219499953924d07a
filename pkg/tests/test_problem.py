import numpy as np
import pytest
from pydantic import ValidationError

from src.problem.catalog import CatalogEntry, CatalogError, CatalogKind
from src.problem.hypotheses import HypothesisStatus, SampleBox, check_hypotheses
from src.scenarios.loader import build_from_scenario
from src.schemas.scenario import HorizonModel, ScenarioFile

BASE = [
    ("psi-zero", {}),
    ("cost-tracking-quadratic", {"alpha": 1.0, "beta": 0.1}),
    ("g-identity", {}),
]


def test_missing_required_slot_is_rejected(make_spec):
    with pytest.raises(CatalogError, match="missing required slot"):
        make_spec(("psi-zero", {}), ("g-identity", {}))


def test_duplicate_slot_is_rejected(make_spec):
    with pytest.raises(CatalogError, match="more than once"):
        make_spec(*BASE, ("psi-cubic", {}))


def test_terminal_constraints_may_repeat(make_spec):
    spec = make_spec(*BASE, ("terminal-example31", {"index": 1}), ("terminal-example31", {"index": 2}))
    assert spec.m == 2


@pytest.mark.parametrize(
    ("kind", "params", "message"),
    [
        ("psi-quartic", {}, "Unknown catalog kind"),
        ("psi-cubic", {"power": 3.0}, "unknown parameter"),
        ("terminal-example31", {"index": 1.5}, "must be an integer"),
        ("terminal-norm-ball", {"radius": 0.0}, "must be >"),
        ("psi-linear", {"coef": float("nan")}, "must be finite"),
    ],
)
def test_catalog_entry_validation(kind, params, message):
    with pytest.raises(CatalogError, match=message):
        CatalogEntry.create(kind, **params)


def test_bounds_and_horizon_are_validated(make_spec):
    with pytest.raises(CatalogError, match="a < b"):
        make_spec(*BASE, bounds=(1.0, 1.0))
    with pytest.raises(CatalogError, match="empty"):
        make_spec(*BASE, horizon=(2.0, 1.0))
    with pytest.raises(CatalogError, match="> 0"):
        make_spec(*BASE, horizon=(0.0, 1.0))
    assert make_spec(*BASE, horizon=(1.0, 1.0)).horizon_fixed


def test_partials_are_symmetric_and_missing_ones_vanish(make_spec):
    spec = make_spec(("psi-zero", {}), ("cost-time", {"gamma": 2.0}), ("g-example31", {}))
    x = np.array([[0.25]])
    assert spec.mixed_constraint("uy", x, 0.3, 0.7, -0.4) == pytest.approx(spec.mixed_constraint("yu", x, 0.3, 0.7, -0.4))
    assert spec.mixed_constraint("yu", x, 0.3, 0.7, -0.4) == pytest.approx(-2.0 * 0.7)
    assert np.all(spec.running_cost("uu", x, 0.3, 0.7, -0.4) == 0.0)
    with pytest.raises(CatalogError):
        spec.psi("yyy", x, 0.0, 0.0)


def test_example31_terminal_constraint_at_zero_state(make_spec):
    spec = make_spec(*BASE, ("terminal-example31", {"index": 1}))
    z = np.zeros(5)
    weight = 0.2
    assert spec.terminal_constraints[0].value(1.5, z, weight) == pytest.approx(-(1.5**2) * 5 * weight)


def test_anisotropic_diffusion_needs_two_dimensions(make_spec):
    with pytest.raises(CatalogError, match="spatial_dim = 2"):
        make_spec(*BASE, ("diffusion-anisotropic", {"a12": 0.1}))
    spec = make_spec(*BASE, ("diffusion-anisotropic", {"a11": 1.0, "a22": 0.5, "a12": 0.2}), spatial_dim=2)
    assert spec.diffusion == ((1.0, 0.2), (0.2, 0.5))


def test_scenario_schema_rejects_bad_documents(generator):
    payload = generator.generate_lq_free_T().model_dump(mode="json")
    payload["horizon"] = {"lo": 2.0, "hi": 1.0}
    with pytest.raises(ValidationError, match="lo < hi"):
        ScenarioFile.model_validate(payload)

    payload = generator.generate_lq_free_T().model_dump(mode="json")
    payload["discretization"]["nodes"] = [2]
    with pytest.raises(ValidationError, match="at least 3 nodes"):
        ScenarioFile.model_validate(payload)

    with pytest.raises(ValidationError):
        HorizonModel(fixed=1.0, lo=0.5)


def test_bundled_scenarios_build(generator):
    for scenario in generator.generate_all_scenarios():
        spec, grid = build_from_scenario(scenario)
        assert grid.spatial_dim == spec.spatial_dim
        assert spec.T_lo <= spec.T_hi


def test_example31_scenario_has_two_terminal_constraints(generator):
    spec, _ = build_from_scenario(generator.generate_example31())
    assert spec.m == 2
    assert not spec.g_is_identity
    assert spec.a == -2.0 and spec.b == 0.0


@pytest.mark.parametrize("kind", ["lq_fixed_T", "example31", "time_varying", "cubic_2d"])
def test_bundled_scenarios_pass_hypothesis_checks(generator, kind):
    spec, _ = build_from_scenario(generator.generate(kind))
    report = check_hypotheses(spec, SampleBox(t_range=(0.0, spec.T_hi), points_per_axis=5, random_points=20))
    assert report.passed, [c.to_dict() for c in report.checks if c.status is HypothesisStatus.FAIL]
    assert report.get("H6").status is HypothesisStatus.NOT_SAMPLED
    assert report.get("H7").status is HypothesisStatus.BY_CONSTRUCTION


def test_decreasing_nonlinearity_fails_monotonicity_with_witness(make_spec):
    spec = make_spec(("psi-linear", {"coef": -1.0}), *BASE[1:])
    check = check_hypotheses(spec).get("H2")
    assert check.status is HypothesisStatus.FAIL
    assert check.worst == pytest.approx(-1.0)
    assert set(check.witness) == {"x", "t", "y", "u"}


def test_control_sensitivity_reports_inverse_floor(make_spec):
    spec = make_spec(("psi-zero", {}), BASE[1], ("g-example31", {}))
    check = check_hypotheses(spec).get("H5")
    assert check.status is HypothesisStatus.PASS
    # |g_u| = 3u^2 + y^2 + 1 >= 1, attained at u = y = 0
    assert check.worst == pytest.approx(1.0)


def test_sample_box_rejects_reversed_range():
    with pytest.raises(ValueError, match="t_range"):
        SampleBox(t_range=(1.0, 0.0))


def test_catalog_kinds_cover_every_slot():
    slots = {CatalogEntry.create(kind).slot for kind in CatalogKind}
    assert len(slots) == 7
