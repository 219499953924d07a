"""Bundled scenarios and scenario-file loading."""

from src.scenarios.bundled import ScenarioGenerator, ScenarioKind, scenario_payload
from src.scenarios.loader import build_from_scenario, load_mp_instance, load_scenario, parse_resolution

__all__ = [
    "ScenarioGenerator",
    "ScenarioKind",
    "build_from_scenario",
    "load_mp_instance",
    "load_scenario",
    "parse_resolution",
    "scenario_payload",
]
