"""Scenario, instance and manifest schemas."""

from src.schemas.scenario import MPInstanceFile, RunManifest, ScenarioFile, SOCConfig, SolverConfig, SolverMode

__all__ = ["MPInstanceFile", "RunManifest", "SOCConfig", "ScenarioFile", "SolverConfig", "SolverMode"]
