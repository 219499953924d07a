from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from src.discretization.grid import Grid


@dataclass(frozen=True, slots=True)
class DiscreteOperator:
    """Central-difference form of -sum_ij a_ij d_i d_j on interior nodes, Dirichlet data eliminated."""

    matrix: sp.csr_matrix
    coefficients: tuple[tuple[float, ...], ...]

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    def apply(self, values: np.ndarray) -> np.ndarray:
        """Apply along the last axis, so trajectories of shape (levels, n) are handled level by level."""
        values = np.asarray(values, dtype=float)
        if values.ndim == 1:
            return self.matrix @ values
        return np.asarray((self.matrix @ values.T).T)


def _second_difference(n: int, h: float) -> sp.csr_matrix:
    return sp.diags([-np.ones(n - 1), 2.0 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1], format="csr") / h**2


def _central_difference(n: int, h: float) -> sp.csr_matrix:
    return sp.diags([-np.ones(n - 1), np.ones(n - 1)], [-1, 1], format="csr") / (2.0 * h)


def _embed(factors: list[sp.spmatrix]) -> sp.csr_matrix:
    out = factors[0]
    for factor in factors[1:]:
        out = sp.kron(out, factor, format="csr")
    return sp.csr_matrix(out)


def validate_coefficients(coefficients: tuple[tuple[float, ...], ...], spatial_dim: int) -> np.ndarray:
    matrix = np.asarray(coefficients, dtype=float)
    if matrix.shape != (spatial_dim, spatial_dim):
        raise ValueError(f"coefficient matrix must be {spatial_dim}x{spatial_dim}, got shape {matrix.shape}")
    if not np.array_equal(matrix, matrix.T):
        raise ValueError(f"coefficient matrix must be symmetric, got {matrix.tolist()}")
    smallest = float(np.linalg.eigvalsh(matrix).min())
    if smallest <= 0.0:
        raise ValueError(f"coefficient matrix must be positive definite, smallest eigenvalue {smallest}")
    return matrix


@lru_cache(maxsize=64)
def _assemble(
    interior_counts: tuple[int, ...], spacing: tuple[float, ...], coefficients: tuple[tuple[float, ...], ...]
) -> sp.csr_matrix:
    dim = len(interior_counts)
    identities = [sp.identity(n, format="csr") for n in interior_counts]
    matrix = sp.csr_matrix((int(np.prod(interior_counts)),) * 2)
    for i in range(dim):
        if coefficients[i][i] != 0.0:
            factors = list(identities)
            factors[i] = _second_difference(interior_counts[i], spacing[i])
            matrix = matrix + coefficients[i][i] * _embed(factors)
        for j in range(i + 1, dim):
            if coefficients[i][j] == 0.0:
                continue
            factors = list(identities)
            factors[i] = _central_difference(interior_counts[i], spacing[i])
            factors[j] = _central_difference(interior_counts[j], spacing[j])
            matrix = matrix - 2.0 * coefficients[i][j] * _embed(factors)
    matrix = sp.csr_matrix(matrix)
    matrix.sort_indices()
    return matrix


def assemble_operator(grid: Grid, coefficients: tuple[tuple[float, ...], ...]) -> DiscreteOperator:
    validate_coefficients(coefficients, grid.spatial_dim)
    coefficients = tuple(tuple(float(v) for v in row) for row in coefficients)
    matrix = _assemble(grid.interior_counts, grid.spacing, coefficients)
    return DiscreteOperator(matrix=matrix, coefficients=coefficients)
