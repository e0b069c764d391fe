"""Tests for monotone quantities and regularity indicators."""

import numpy as np
import pytest

from splitmap.diagnostics import (
    InsufficientHistory,
    backward_heat_kernel,
    energy_decay_ratio,
    kernel_mass_outside,
    singular_set_detect,
    static_monotonicity_curve,
    struwe_curve,
)
from splitmap.errors import BallExceedsDomain
from splitmap.grid import CoupledField, SplitGrid
from splitmap.parabolic import Trajectory


def field_from(grid, f):
    return CoupledField.from_functions(grid, f, f)


@pytest.fixture
def grid():
    """2-D grid on [-1, 1]² with h = 1/16."""
    return SplitGrid(2, 0.0625)


@pytest.fixture
def constant(grid):
    """Constant circle-valued field."""
    return field_from(grid, lambda x: np.broadcast_to([0.0, 1.0], x.shape[:-1] + (2,)).copy())


@pytest.fixture
def hedgehog():
    """x/|x| on a grid through the origin, the origin sent to e₁."""
    grid = SplitGrid(2, 0.125)

    def f(x):
        r = np.linalg.norm(x, axis=-1, keepdims=True)
        return np.where(r > 0, x / np.where(r > 0, r, 1.0), np.array([1.0, 0.0]))

    return field_from(grid, f)


def test_constant_map_monotonicity(constant):
    """Test Θ ≡ 0 for a constant map."""
    curve = static_monotonicity_curve(constant, np.zeros(2), [0.2, 0.4, 0.8])
    assert np.all(curve.values == 0.0)
    assert curve.violation == 0.0
    assert len(curve.rows()) == 3


def test_linear_map_monotonicity(grid):
    """Test Θ grows like 2πr² for u(x) = x and the radial deficit is positive."""
    u = field_from(grid, lambda x: x.copy())
    radii = [0.2, 0.4, 0.6]
    curve = static_monotonicity_curve(u, np.zeros(2), radii)
    assert curve.violation == 0.0
    assert np.all(np.diff(curve.values) > 0)
    assert curve.values[-1] == pytest.approx(2 * np.pi * 0.36, rel=2e-2)
    assert curve.deficits[0] == 0.0
    assert np.all(curve.deficits[1:] > 0)


def test_monotonicity_radii_checked(constant):
    """Test radii must increase and stay in the box."""
    with pytest.raises(ValueError):
        static_monotonicity_curve(constant, np.zeros(2), [0.4, 0.2])
    with pytest.raises(BallExceedsDomain):
        static_monotonicity_curve(constant, np.zeros(2), [0.5, 1.5])


def test_monotonicity_with_constant(grid):
    """Test the exponential factor e^{Cr}."""
    u = field_from(grid, lambda x: x.copy())
    plain = static_monotonicity_curve(u, np.zeros(2), [0.3])
    scaled = static_monotonicity_curve(u, np.zeros(2), [0.3], constant=2.0)
    assert scaled.values[0] == pytest.approx(np.exp(0.6) * plain.values[0])


def test_heat_kernel_normalized():
    """Test the backward heat kernel integrates to one."""
    g = SplitGrid(2, 1.0 / 64)
    pts = np.stack(np.meshgrid(g.axis(0), g.axis(1), indexing="ij"), axis=-1)
    mass = np.sum(backward_heat_kernel(pts, np.zeros(2), 0.01)) * g.spacing ** 2
    assert mass == pytest.approx(1.0, rel=1e-6)
    assert kernel_mass_outside(g, np.zeros(2), 0.01) < 1e-9
    assert kernel_mass_outside(g, np.zeros(2), 10.0) > 0.5


def sweep_trajectory(grid):
    """Static sweep u = (cos x₁, sin x₁) stored at two times."""
    f = lambda x: np.stack([np.cos(x[..., 0]), np.sin(x[..., 0])], axis=-1)
    u = field_from(grid, f)
    still = CoupledField(grid, np.zeros_like(u.plus), np.zeros_like(u.minus))
    return Trajectory(0.1, times=[0.0, 0.1], fields=[u, u], derivatives=[None, still])


def test_struwe_quantity_of_sweep():
    """Test R²∫|∇u|²G = R²(1 − mass outside) for a unit-speed sweep."""
    grid = SplitGrid(2, 1.0 / 32)
    q = struwe_curve(sweep_trajectory(grid), np.zeros(2), 0.1, [0.1, 0.2])
    assert np.allclose(q.values / q.radii ** 2, 1.0 - q.mass_defect, rtol=1e-2)
    assert np.all(q.slice_times == 0.1)
    assert np.all(np.isfinite(q.rhs))
    assert np.allclose(q.kernel_mass + q.mass_defect, 1.0, atol=1e-2)
    assert len(q.rows()) == 2


def test_struwe_needs_history():
    """Test radii reaching before the first frame are refused."""
    grid = SplitGrid(2, 0.125)
    with pytest.raises(InsufficientHistory):
        struwe_curve(sweep_trajectory(grid), np.zeros(2), 0.1, [0.2, 0.5])
    with pytest.raises(InsufficientHistory):
        struwe_curve(Trajectory(0.1), np.zeros(2), 0.1, [0.1])


def test_detector_flags_hedgehog(hedgehog):
    """Test the point singularity is flagged on Γ."""
    result = singular_set_detect(hedgehog, 0.5)
    points = result.flagged_points
    assert np.any(np.all(np.isclose(points, 0.0), axis=-1))
    assert np.all(np.isnan(result.holder[result.flagged]))
    assert result.gamma_energies.shape == (17,)


def test_detector_constant_map(constant):
    """Test nothing is flagged for a constant map and Hölder values are finite."""
    result = singular_set_detect(constant, 0.25)
    assert not np.any(result.flagged)
    assert np.all(np.isfinite(result.holder[result.evaluated]))
    assert np.all(np.isnan(result.energies[0]))
    rows = result.rows()
    assert len(rows) == int(result.evaluated.sum())
    assert set(rows[0]) == {"x0", "x1", "r", "energy", "flagged", "gamma", "holder"}


def test_detector_radius_floor(constant):
    """Test radii below four cells are raised to 4h."""
    result = singular_set_detect(constant, 0.01)
    assert result.radius == pytest.approx(4 * constant.grid.spacing)


def test_decay_ratio(grid, constant):
    """Test the decay ratio: 0 for a constant map, θ² for a linear map in 2-D."""
    assert energy_decay_ratio(constant, np.zeros(2), 0.5, 0.5) == 0.0
    u = field_from(grid, lambda x: x.copy())
    assert energy_decay_ratio(u, np.zeros(2), 0.8, 0.5) == pytest.approx(0.25, rel=5e-2)
    with pytest.raises(ValueError):
        energy_decay_ratio(u, np.zeros(2), 0.5, 1.5)
