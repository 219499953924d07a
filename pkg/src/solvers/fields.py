from collections.abc import Callable
from dataclasses import dataclass

import numpy as np
import pandas as pd

from src.discretization.grid import Grid


@dataclass(frozen=True, slots=True)
class SpaceTimeField:
    """Values on (time level, interior node); horizon None tags the unit interval of the reduced problem."""

    values: np.ndarray
    grid: Grid
    horizon: float | None = None

    def __post_init__(self) -> None:
        expected = (self.grid.levels, self.grid.n_interior)
        if np.shape(self.values) != expected:
            raise ValueError(f"field shape {np.shape(self.values)} does not match grid shape {expected}")

    @classmethod
    def zeros(cls, grid: Grid, horizon: float | None = None) -> "SpaceTimeField":
        return cls(np.zeros((grid.levels, grid.n_interior)), grid, horizon)

    @classmethod
    def constant(cls, grid: Grid, value: float, horizon: float | None = None) -> "SpaceTimeField":
        return cls(np.full((grid.levels, grid.n_interior), float(value)), grid, horizon)

    @classmethod
    def from_function(
        cls, grid: Grid, fn: Callable[[np.ndarray, np.ndarray], np.ndarray], horizon: float | None = None
    ) -> "SpaceTimeField":
        """Sample fn(x, t) with x of shape (n, d) and t of shape (levels, 1)."""
        times = grid.s[:, None] * (1.0 if horizon is None else horizon)
        values = np.broadcast_to(np.asarray(fn(grid.coords, times), dtype=float), (grid.levels, grid.n_interior))
        return cls(np.array(values), grid, horizon)

    @property
    def is_reduced(self) -> bool:
        return self.horizon is None

    @property
    def times(self) -> np.ndarray:
        return self.grid.s * (1.0 if self.horizon is None else self.horizon)

    @property
    def terminal(self) -> np.ndarray:
        return self.values[-1]

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.values)))

    def with_values(self, values: np.ndarray) -> "SpaceTimeField":
        return SpaceTimeField(np.asarray(values, dtype=float), self.grid, self.horizon)

    def __add__(self, other: "SpaceTimeField") -> "SpaceTimeField":
        return self.with_values(self.values + other.values)

    def __sub__(self, other: "SpaceTimeField") -> "SpaceTimeField":
        return self.with_values(self.values - other.values)

    def scaled(self, factor: float) -> "SpaceTimeField":
        return self.with_values(factor * self.values)

    def to_frame(self, name: str = "value") -> pd.DataFrame:
        levels, nodes = np.meshgrid(np.arange(self.grid.levels), np.arange(self.grid.n_interior), indexing="ij")
        frame = pd.DataFrame(
            {
                "time_level": levels.ravel(),
                "time": np.repeat(self.times, self.grid.n_interior),
                "node_index": nodes.ravel(),
            }
        )
        coords = self.grid.coords
        for axis in range(self.grid.spatial_dim):
            frame[f"x{axis}"] = np.tile(coords[:, axis], self.grid.levels)
        frame[name] = self.values.ravel()
        return frame
