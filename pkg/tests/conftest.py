from pathlib import Path

import numpy as np
import pytest

from src.core.optimizer import solve
from src.problem.catalog import CatalogEntry
from src.problem.spec import build_problem
from src.scenarios.bundled import ScenarioGenerator
from src.scenarios.loader import build_from_scenario
from src.solvers.fields import SpaceTimeField
from src.solvers.reduction import ControlPoint

SCENARIO_DIR = Path(__file__).resolve().parents[1] / "scenarios"


@pytest.fixture(scope="session")
def generator():
    return ScenarioGenerator(seed=42)


@pytest.fixture(scope="session")
def scenario_dir():
    return SCENARIO_DIR


@pytest.fixture(scope="session")
def lq_fixed(generator):
    scenario = generator.generate_lq_fixed_T()
    spec, grid = build_from_scenario(scenario)
    return scenario, spec, grid


@pytest.fixture(scope="session")
def lq_fixed_result(lq_fixed):
    scenario, spec, grid = lq_fixed
    return solve(spec, grid, scenario.solver)


@pytest.fixture(scope="session")
def time_varying(generator):
    scenario = generator.generate_time_varying()
    spec, grid = build_from_scenario(scenario)
    return scenario, spec, grid


@pytest.fixture
def make_spec():
    def factory(*entries, **kwargs):
        return build_problem([CatalogEntry.create(kind, **params) for kind, params in entries], **kwargs)

    return factory


@pytest.fixture
def random_point():
    def factory(grid, T, seed=0, scale=0.5):
        rng = np.random.default_rng(seed)
        values = scale * rng.uniform(-1.0, 1.0, size=(grid.levels, grid.n_interior))
        return ControlPoint(T=T, v=SpaceTimeField(values, grid, None))

    return factory
