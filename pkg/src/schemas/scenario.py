from datetime import datetime
from enum import Enum
from typing import Any

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from src.problem.catalog import CatalogEntry, CatalogKind


class SolverMode(str, Enum):
    PROJECTED_GRADIENT = "projected-gradient"
    AUGMENTED_LAGRANGIAN = "augmented-lagrangian"
    AUTO = "auto"


class SolverConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    mode: SolverMode = SolverMode.AUTO
    armijo_c1: float = Field(1e-4, gt=0.0, lt=1.0)
    shrink: float = Field(0.5, gt=0.0, lt=1.0)
    initial_step: float = Field(1.0, gt=0.0)
    min_step: float = Field(1e-14, gt=0.0)
    grad_tol: float = Field(1e-8, gt=0.0)
    feas_tol: float = Field(1e-8, gt=0.0)
    max_iters: int = Field(2000, ge=1)
    max_outer: int = Field(30, ge=1)
    penalty_init: float = Field(10.0, gt=0.0)
    penalty_growth: float = Field(10.0, gt=1.0)
    penalty_max: float = Field(1e8, gt=0.0)


class SOCConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    samples: int = Field(500, ge=1)
    seed: int = 42
    dir_tol: float = Field(1e-9, gt=0.0)
    soc_tol: float = Field(1e-8, gt=0.0)
    soc_margin: float = Field(1e-10, gt=0.0)


class CatalogEntryModel(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: CatalogKind
    params: dict[str, float] = Field(default_factory=dict)

    def to_entry(self) -> CatalogEntry:
        return CatalogEntry.create(self.kind, **self.params)


class BoundsModel(BaseModel):
    model_config = ConfigDict(extra="forbid")

    a: float
    b: float

    @model_validator(mode="after")
    def _ordered(self) -> "BoundsModel":
        if not self.a < self.b:
            raise ValueError(f"bounds require a < b, got a={self.a}, b={self.b}")
        return self


class HorizonModel(BaseModel):
    """Either a bracket {lo, hi} with 0 < lo < hi, or {fixed: T} for a collapsed bracket."""

    model_config = ConfigDict(extra="forbid")

    lo: float | None = None
    hi: float | None = None
    fixed: float | None = None

    @model_validator(mode="after")
    def _bracket(self) -> "HorizonModel":
        if self.fixed is not None:
            if self.lo is not None or self.hi is not None:
                raise ValueError("horizon takes either 'fixed' or 'lo'/'hi', not both")
            if not self.fixed > 0.0:
                raise ValueError(f"fixed horizon must be > 0, got {self.fixed}")
            return self
        if self.lo is None or self.hi is None:
            raise ValueError("horizon needs both 'lo' and 'hi'")
        if not self.lo > 0.0:
            raise ValueError(f"horizon.lo must be > 0, got {self.lo}")
        if not self.lo < self.hi:
            raise ValueError(f"horizon requires lo < hi, got lo={self.lo}, hi={self.hi}")
        return self

    def bracket(self) -> tuple[float, float]:
        if self.fixed is not None:
            return (self.fixed, self.fixed)
        return (float(self.lo), float(self.hi))


class DiscretizationModel(BaseModel):
    model_config = ConfigDict(extra="forbid")

    nodes: list[int] = Field(min_length=1, max_length=2)
    time_steps: int = Field(ge=2)
    theta: float = Field(0.5, ge=0.5, le=1.0)

    @field_validator("nodes")
    @classmethod
    def _enough_nodes(cls, value: list[int]) -> list[int]:
        if any(n < 3 for n in value):
            raise ValueError(f"each axis needs at least 3 nodes, got {value}")
        return value


class ScenarioFile(BaseModel):
    model_config = ConfigDict(extra="forbid")

    schema_version: str = "1.0"
    name: str = Field(min_length=1)
    spatial_dim: int = Field(1, ge=1, le=2)
    domain_extent: list[float] = Field(min_length=1, max_length=2)
    catalog: list[CatalogEntryModel] = Field(min_length=1)
    bounds: BoundsModel
    horizon: HorizonModel
    discretization: DiscretizationModel
    solver: SolverConfig = Field(default_factory=SolverConfig)
    soc: SOCConfig = Field(default_factory=SOCConfig)

    @model_validator(mode="after")
    def _dimensions(self) -> "ScenarioFile":
        if len(self.domain_extent) != self.spatial_dim:
            raise ValueError(f"domain_extent has {len(self.domain_extent)} entries for spatial_dim {self.spatial_dim}")
        if any(v <= 0.0 for v in self.domain_extent):
            raise ValueError(f"domain_extent must be positive, got {self.domain_extent}")
        if len(self.discretization.nodes) != self.spatial_dim:
            raise ValueError(
                f"discretization.nodes has {len(self.discretization.nodes)} entries for spatial_dim {self.spatial_dim}"
            )
        return self


class BruteForceModel(BaseModel):
    model_config = ConfigDict(extra="forbid")

    box: list[tuple[float, float]] = Field(min_length=1)
    grid_points: int = Field(41, ge=2)


class MPInstanceFile(BaseModel):
    model_config = ConfigDict(extra="forbid")

    schema_version: str = "1.0"
    instance: str = Field(min_length=1)
    params: dict[str, Any] = Field(default_factory=dict)
    candidate: list[float] | None = None
    brute_force: BruteForceModel | None = None
    normalize_lambda: bool = True
    samples: int = Field(200, ge=1)
    seed: int = 42


class RunManifest(BaseModel):
    schema_version: str
    subcommand: str
    scenario_path: str
    scenario_sha256: str
    seed: int | None = None
    tolerances: dict[str, float] = Field(default_factory=dict)
    started_at: datetime
    finished_at: datetime
    exit_code: int
    outputs: list[str] = Field(default_factory=list)
