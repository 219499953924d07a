import numpy as np
import pytest

from src.discretization.grid import GridError, build_grid_from_extent
from src.discretization.operator import assemble_operator, validate_coefficients

IDENTITY_1D = ((1.0,),)
IDENTITY_2D = ((1.0, 0.0), (0.0, 1.0))


def test_grid_shapes_and_quadrature():
    grid = build_grid_from_extent((1.0,), (5,), 4, theta=0.5)
    assert grid.n_interior == 3
    assert grid.levels == 5
    assert grid.weight == pytest.approx(0.25)
    assert grid.measure == pytest.approx(0.75)
    np.testing.assert_allclose(grid.coords[:, 0], [0.25, 0.5, 0.75])
    assert grid.time_weights.sum() == pytest.approx(1.0)
    assert grid.active_levels.all()


def test_implicit_euler_has_a_dummy_first_level():
    grid = build_grid_from_extent((1.0,), (5,), 4, theta=1.0)
    assert grid.time_weights[0] == 0.0
    assert not grid.active_levels[0]
    assert grid.time_weights.sum() == pytest.approx(1.0)


def test_two_dimensional_grid_orders_interior_nodes():
    grid = build_grid_from_extent((1.0, 2.0), (4, 5), 3)
    assert grid.interior_counts == (2, 3)
    assert grid.coords.shape == (6, 2)
    full = grid.to_full(np.arange(6.0))
    assert full.shape == (20,)
    assert np.count_nonzero(grid.boundary_mask) == 20 - 6
    np.testing.assert_allclose(full[grid.interior_index], np.arange(6.0))


@pytest.mark.parametrize(
    ("extent", "counts", "steps", "theta"),
    [((1.0,), (2,), 4, 0.5), ((1.0,), (5,), 1, 0.5), ((1.0,), (5,), 4, 0.4), ((0.0,), (5,), 4, 0.5), ((1.0,), (5, 5), 4, 0.5)],
)
def test_invalid_grids_are_rejected(extent, counts, steps, theta):
    with pytest.raises(GridError):
        build_grid_from_extent(extent, counts, steps, theta)


def test_sine_is_an_exact_discrete_eigenvector():
    grid = build_grid_from_extent((1.0,), (17,), 2)
    op = assemble_operator(grid, IDENTITY_1D)
    h = grid.spacing[0]
    mode = np.sin(np.pi * grid.coords[:, 0])
    eigenvalue = (2.0 - 2.0 * np.cos(np.pi * h)) / h**2
    np.testing.assert_allclose(op.apply(mode), eigenvalue * mode, atol=1e-11)
    assert eigenvalue == pytest.approx(np.pi**2, rel=1e-2)


def test_operator_applies_level_by_level():
    grid = build_grid_from_extent((1.0,), (9,), 3)
    op = assemble_operator(grid, IDENTITY_1D)
    values = np.random.default_rng(3).standard_normal((4, 7))
    stacked = op.apply(values)
    for k in range(4):
        np.testing.assert_allclose(stacked[k], op.matrix @ values[k])


def test_anisotropic_operator_is_symmetric_positive_definite():
    grid = build_grid_from_extent((1.0, 1.0), (7, 7), 2)
    op = assemble_operator(grid, ((1.0, 0.2), (0.2, 0.5)))
    dense = op.matrix.toarray()
    np.testing.assert_allclose(dense, dense.T, atol=1e-12)
    assert np.linalg.eigvalsh(dense).min() > 0.0


def test_two_dimensional_laplacian_converges_on_smooth_mode():
    errors = []
    for n in (9, 17):
        grid = build_grid_from_extent((1.0, 1.0), (n, n), 2)
        op = assemble_operator(grid, IDENTITY_2D)
        x, y = grid.coords[:, 0], grid.coords[:, 1]
        mode = np.sin(np.pi * x) * np.sin(np.pi * y)
        errors.append(float(np.max(np.abs(op.apply(mode) - 2.0 * np.pi**2 * mode))))
    assert errors[0] / errors[1] == pytest.approx(4.0, rel=0.1)


@pytest.mark.parametrize(
    "coefficients",
    [((1.0, 0.3), (0.2, 1.0)), ((1.0, 2.0), (2.0, 1.0)), ((1.0,),)],
)
def test_invalid_coefficients_are_rejected(coefficients):
    with pytest.raises(ValueError):
        validate_coefficients(coefficients, 2)
