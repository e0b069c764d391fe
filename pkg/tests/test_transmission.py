"""Tests for reduced spaces and coupled linear solves."""

import numpy as np
import pytest

from splitmap.grid import SIDES, CoupledField, Side, SplitGrid
from splitmap.transmission import ReducedSolver, pack, reduced_space, unpack


@pytest.fixture
def grid():
    """2-D grid on [-1, 1]² with h = 1/8."""
    return SplitGrid(2, 0.125)


def dirichlet_offset(grid, f, components=1):
    """Field carrying f on Σ± and zero elsewhere."""
    arrays = {}
    for side in SIDES:
        values = f(grid.coordinates(side))
        arr = np.zeros(grid.side_shape(side) + (components,))
        mask = grid.dirichlet_mask(side)
        arr[mask] = values[mask]
        arrays[side] = arr
    return CoupledField(grid, arrays[Side.plus], arrays[Side.minus])


def test_reduced_space_size(grid):
    """Test the identity space counts interior and free Γ nodes once."""
    space = reduced_space(grid, 2)
    interior = sum(int(grid.interior_mask(s).sum()) for s in SIDES)
    assert space.n_unknowns == 2 * (interior + int(grid.gamma_free().sum()))
    assert space.matrix.shape[0] == 2 * (grid.n_nodes(Side.plus) + grid.n_nodes(Side.minus))


def test_pack_unpack(grid):
    """Test ambient packing order."""
    f = lambda x: np.stack([x[..., 0], x[..., 1] ** 2], axis=-1)
    u = CoupledField.from_functions(grid, f, f)
    back = unpack(grid, pack(u), 2)
    assert back.max_difference(u) == 0.0


def test_continuous_solve_is_harmonic(grid):
    """Test the shared Γ block gives the one-domain harmonic function."""
    f = lambda x: (x[..., 0] * x[..., 1] + 0.5 * x[..., 0])[..., None]
    offset = dirichlet_offset(grid, f)
    u = unpack(grid, ReducedSolver(reduced_space(grid, 1)).solve(None, pack(offset)), 1)
    exact = CoupledField.from_functions(grid, f, f)
    assert u.max_difference(exact) < 1e-12


def test_mass_shifted_solve(grid):
    """Test (αM + K) with a load αM·u reproduces a harmonic u."""
    f = lambda x: (x[..., 0] - 2 * x[..., 1])[..., None]
    exact = CoupledField.from_functions(grid, f, f)
    space = reduced_space(grid, 1)
    solver = ReducedSolver(space, mass_shift=10.0)
    mass = np.concatenate([grid.mass[s] for s in SIDES])
    load = 10.0 * mass * pack(exact)
    u = unpack(grid, solver.solve(load, pack(dirichlet_offset(grid, f))), 1)
    assert u.max_difference(exact) < 1e-12


def test_gamma_bases_must_agree(grid):
    """Test plus and minus Γ bases need the same number of unknowns."""
    n = int(grid.gamma_free().sum())
    with pytest.raises(ValueError):
        reduced_space(grid, 2, gamma_plus_basis=np.zeros((n, 2, 1)),
                      gamma_minus_basis=np.zeros((n, 2, 2)))


def test_lumped_mass_positive(grid):
    """Test diag(SᵀMS) is positive for the identity space."""
    assert np.all(reduced_space(grid, 1).lumped_mass() > 0)
