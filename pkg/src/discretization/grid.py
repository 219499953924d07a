from dataclasses import dataclass
from functools import cached_property

import numpy as np


class GridError(ValueError):
    """Raised for resolutions or extents that cannot carry the scheme."""


@dataclass(frozen=True)
class Grid:
    """Uniform tensor grid on a box plus a uniform partition of the unit time interval.

    Only interior nodes carry unknowns (homogeneous Dirichlet data). Quadrature is the
    trapezoidal rule, which on interior nodes reduces to the uniform weight prod(h).
    """

    counts: tuple[int, ...]
    extent: tuple[float, ...]
    n_steps: int
    theta: float = 0.5

    @property
    def spatial_dim(self) -> int:
        return len(self.counts)

    @cached_property
    def spacing(self) -> tuple[float, ...]:
        return tuple(length / (n - 1) for n, length in zip(self.counts, self.extent))

    @cached_property
    def interior_counts(self) -> tuple[int, ...]:
        return tuple(n - 2 for n in self.counts)

    @property
    def n_interior(self) -> int:
        return int(np.prod(self.interior_counts))

    @property
    def levels(self) -> int:
        return self.n_steps + 1

    @property
    def step(self) -> float:
        return 1.0 / self.n_steps

    @property
    def weight(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def measure(self) -> float:
        return self.weight * self.n_interior

    @cached_property
    def s(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.levels)

    @cached_property
    def coords(self) -> np.ndarray:
        axes = [h * np.arange(1, n - 1) for h, n in zip(self.spacing, self.counts)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    @cached_property
    def full_coords(self) -> np.ndarray:
        axes = [np.linspace(0.0, length, n) for n, length in zip(self.counts, self.extent)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    @cached_property
    def boundary_mask(self) -> np.ndarray:
        mask = np.zeros(self.counts, dtype=bool)
        for axis, n in enumerate(self.counts):
            index = [slice(None)] * self.spatial_dim
            for edge in (0, n - 1):
                index[axis] = edge
                mask[tuple(index)] = True
        return mask.ravel()

    @cached_property
    def interior_index(self) -> np.ndarray:
        """Full-grid flat index of each interior unknown, in C order."""
        return np.flatnonzero(~self.boundary_mask)

    @cached_property
    def time_weights(self) -> np.ndarray:
        """θ-scheme quadrature weights τ_k on the unit interval; they sum to 1."""
        k = np.arange(self.levels)
        return self.step * (self.theta * (k >= 1) + (1.0 - self.theta) * (k <= self.n_steps - 1))

    @cached_property
    def active_levels(self) -> np.ndarray:
        return self.time_weights > 0.0

    def to_full(self, values: np.ndarray) -> np.ndarray:
        """Scatter interior values onto the full grid with zero Dirichlet data."""
        values = np.asarray(values, dtype=float)
        full = np.zeros(values.shape[:-1] + (int(np.prod(self.counts)),))
        full[..., self.interior_index] = values
        return full

    def with_resolution(self, counts: tuple[int, ...], n_steps: int) -> "Grid":
        return build_grid_from_extent(self.extent, counts, n_steps, self.theta)


def build_grid_from_extent(
    extent: tuple[float, ...], counts: tuple[int, ...], n_steps: int, theta: float = 0.5
) -> Grid:
    extent = tuple(float(v) for v in extent)
    counts = tuple(int(n) for n in counts)
    if len(counts) != len(extent):
        raise GridError(f"resolution has {len(counts)} axes but the domain has {len(extent)}")
    if any(v <= 0.0 for v in extent):
        raise GridError(f"domain extent must be positive, got {extent}")
    if any(n < 3 for n in counts):
        raise GridError(f"each axis needs at least 3 nodes, got {counts}")
    if n_steps < 2:
        raise GridError(f"at least 2 time steps are required, got {n_steps}")
    if not 0.5 <= theta <= 1.0:
        raise GridError(f"theta must lie in [0.5, 1], got {theta}")
    return Grid(counts=counts, extent=extent, n_steps=int(n_steps), theta=float(theta))


def build_grid(spec, resolution: tuple[int, ...] | int, n_steps: int, theta: float = 0.5) -> Grid:
    if isinstance(resolution, int):
        resolution = (resolution,) * spec.spatial_dim
    return build_grid_from_extent(spec.domain_extent, tuple(resolution), n_steps, theta)
