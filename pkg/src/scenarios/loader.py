import json
from pathlib import Path
from typing import Any

import yaml

from src.discretization.grid import Grid, build_grid_from_extent
from src.problem.spec import ProblemSpec, build_problem
from src.schemas.scenario import MPInstanceFile, ScenarioFile

YAML_SUFFIXES = (".yaml", ".yml")


def load_payload(path: str | Path) -> dict[str, Any]:
    """Read a JSON or YAML document; the suffix decides the parser."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    payload = yaml.safe_load(text) if path.suffix.lower() in YAML_SUFFIXES else json.loads(text)
    if not isinstance(payload, dict):
        raise ValueError(f"{path} must hold a mapping at the top level")
    return payload


def load_scenario(path: str | Path) -> ScenarioFile:
    return ScenarioFile.model_validate(load_payload(path))


def load_mp_instance(path: str | Path) -> MPInstanceFile:
    return MPInstanceFile.model_validate(load_payload(path))


def parse_resolution(text: str) -> tuple[tuple[int, ...], int]:
    """Parse "17:32" or "17x17:32" into (nodes per axis, time steps)."""
    try:
        space, time = text.split(":")
        counts = tuple(int(part) for part in space.lower().split("x"))
        steps = int(time)
    except ValueError as exc:
        raise ValueError(f"resolution override must look like '17:32' or '17x17:32', got {text!r}") from exc
    return counts, steps


def build_from_scenario(
    scenario: ScenarioFile, resolution: tuple[tuple[int, ...], int] | None = None
) -> tuple[ProblemSpec, Grid]:
    spec = build_problem(
        [entry.to_entry() for entry in scenario.catalog],
        spatial_dim=scenario.spatial_dim,
        domain_extent=tuple(scenario.domain_extent),
        bounds=(scenario.bounds.a, scenario.bounds.b),
        horizon=scenario.horizon.bracket(),
    )
    counts, steps = (tuple(scenario.discretization.nodes), scenario.discretization.time_steps)
    if resolution is not None:
        counts, steps = resolution
        if len(counts) == 1 and spec.spatial_dim == 2:
            counts = counts * 2
    grid = build_grid_from_extent(spec.domain_extent, counts, steps, scenario.discretization.theta)
    return spec, grid
