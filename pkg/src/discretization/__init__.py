"""Spatial grid, time partition and the discrete elliptic operator."""

from src.discretization.grid import Grid, GridError, build_grid, build_grid_from_extent
from src.discretization.operator import DiscreteOperator, assemble_operator

__all__ = ["DiscreteOperator", "Grid", "GridError", "assemble_operator", "build_grid", "build_grid_from_extent"]
