"""Utility helpers."""

from src.utils.finite_difference import FDMatch, directional_curvature, directional_derivative

__all__ = ["FDMatch", "directional_curvature", "directional_derivative"]
