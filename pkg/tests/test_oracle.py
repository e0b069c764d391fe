"""Tests for the exactly solvable linear problems and the blow-up check."""

import numpy as np
import pytest

from splitmap.elliptic import AdmissibleProblem
from splitmap.geometry import RotationMap, SubmanifoldPair, circle
from splitmap.grid import CoupledField, Side, SplitGrid
from splitmap.oracle import (
    LinearTransmissionProblem,
    ScaleBelowGrid,
    SingularCoupling,
    angle_transmission_solve,
    blowup_consistency_check,
    geodesic_slope,
    heat_jump_fourier_1d,
    solve_coupled_harmonic,
)


@pytest.fixture
def grid():
    """2-D grid on [-1, 1]² with h = 1/8."""
    return SplitGrid(2, 0.125)


def stack(f):
    return lambda x: f(x)[..., None]


def test_identity_coupling_reproduces_exact_pair(grid):
    """Test P = I reproduces x₁ + x₁xₙ on both half balls."""
    f = stack(lambda x: x[..., 0] + x[..., 0] * x[..., 1])
    prob = LinearTransmissionProblem.from_functions(grid, 1, 0, np.eye(1), f, f)
    sol = solve_coupled_harmonic(prob)
    exact = CoupledField.from_functions(grid, f, f)
    assert sol.as_field(grid).max_difference(exact) < 1e-10
    assert sol.harmonic_residual < 1e-9
    assert sol.trace_residual < 1e-10
    assert sol.flux_residual < 1e-9


def test_scaled_coupling_reproduces_exact_pair(grid):
    """Test P = 2: v₊ = x₁ + 2x₁y and v₋ = 2x₁ + x₁y satisfy both interface conditions."""
    f_plus = stack(lambda x: x[..., 0] + 2 * x[..., 0] * x[..., 1])
    f_minus = stack(lambda x: 2 * x[..., 0] + x[..., 0] * x[..., 1])
    prob = LinearTransmissionProblem.from_functions(grid, 1, 0, np.array([[2.0]]), f_plus, f_minus)
    sol = solve_coupled_harmonic(prob)
    assert np.max(np.abs(sol.plus - prob.plus_data)) < 1e-10
    assert np.max(np.abs(sol.minus - prob.minus_data)) < 1e-10
    assert sol.flux_residual < 1e-9


def test_reflection_decoupling(grid):
    """Test the reflected difference is harmonic, vanishes on Γ and the + combination is Neumann."""
    f_plus = stack(lambda x: x[..., 0] + 2 * x[..., 0] * x[..., 1])
    f_minus = stack(lambda x: 2 * x[..., 0] + x[..., 0] * x[..., 1])
    prob = LinearTransmissionProblem.from_functions(grid, 1, 0, np.array([[2.0]]), f_plus, f_minus)
    report = solve_coupled_harmonic(prob).reflection
    assert report is not None
    assert report.difference_harmonic_residual < 1e-8
    assert report.difference_on_gamma < 1e-10
    assert report.neumann_plus_combination < 1e-8
    assert report.neumann_minus_combination > 1.0
    assert report.vanishing_combination == "+"
    assert report.orthogonal_identity is None


def test_orthogonal_identity(grid):
    """Test |v₋ᵗ∘R − Pv₊ᵗ| = |Pᵀv₋ᵗ∘R − v₊ᵗ| for orthogonal P."""
    f_plus = stack(lambda x: x[..., 0] + x[..., 0] * x[..., 1])
    f_minus = stack(lambda x: -x[..., 0] - x[..., 0] * x[..., 1])
    prob = LinearTransmissionProblem.from_functions(grid, 1, 0, -np.eye(1), f_plus, f_minus)
    report = solve_coupled_harmonic(prob).reflection
    assert report.orthogonal_identity < 1e-10


def test_normal_components_vanish_on_gamma(grid):
    """Test k = 0, m = 1 with vⁿ₊ = xₙ and vⁿ₋ = −3xₙ."""
    f_plus = stack(lambda x: x[..., 1])
    f_minus = stack(lambda x: -3 * x[..., 1])
    prob = LinearTransmissionProblem.from_functions(grid, 0, 1, np.zeros((0, 0)), f_plus, f_minus)
    sol = solve_coupled_harmonic(prob)
    assert sol.normal_residual < 1e-12
    assert np.max(np.abs(sol.plus - prob.plus_data)) < 1e-10
    assert np.max(np.abs(sol.minus - prob.minus_data)) < 1e-10
    assert sol.reflection is None


def test_singular_coupling(grid):
    """Test a singular P is refused."""
    f = stack(lambda x: x[..., 0])
    prob = LinearTransmissionProblem.from_functions(grid, 1, 0, np.zeros((1, 1)), f, f)
    with pytest.raises(SingularCoupling):
        solve_coupled_harmonic(prob)


def test_problem_data_shape_checked(grid):
    """Test data must carry k + m components."""
    with pytest.raises(ValueError):
        LinearTransmissionProblem(grid, 1, 1, np.eye(1), np.zeros(grid.side_shape(Side.plus) + (1,)),
                                  np.zeros(grid.side_shape(Side.minus) + (2,)))


def test_problem_dict_round_trip(grid):
    """Test problem serialization keeps P and the data."""
    f = stack(lambda x: x[..., 0])
    prob = LinearTransmissionProblem.from_functions(grid, 1, 0, np.array([[3.0]]), f, f)
    back = LinearTransmissionProblem.from_dict(prob.to_dict())
    assert np.allclose(back.P, prob.P)
    assert np.allclose(back.minus_data, prob.minus_data)


def test_angle_transmission(grid):
    """Test harmonic angles with a constant jump β and matched normal derivatives."""
    beta = 0.4
    theta = lambda x: 0.3 + x[..., 0] + 0.5 * x[..., 0] * x[..., 1]
    u = angle_transmission_solve(grid, theta, lambda x: theta(x) + beta, beta)
    assert np.allclose(u.plus[..., 0], theta(grid.coordinates(Side.plus)), atol=1e-10)
    assert np.allclose(u.minus[..., 0], theta(grid.coordinates(Side.minus)) + beta, atol=1e-10)
    assert np.allclose(u.trace_minus - u.trace_plus, beta)


def test_geodesic_slope():
    """Test the 1-D minimizer slope (θ₁ − θ₀ − β)/2."""
    assert geodesic_slope(0.0, np.pi / 2, np.pi / 6) == pytest.approx(np.pi / 6)


def test_heat_jump_fourier():
    """Test the Fourier solution: jump β at 0, boundary values fixed, modes decay."""
    x = np.linspace(-1.0, 1.0, 9)
    theta0, theta1, beta = 0.0, 1.0, 0.3
    early = heat_jump_fourier_1d(x, 0.0, theta0, theta1, beta, [0.2])
    late = heat_jump_fourier_1d(x, 50.0, theta0, theta1, beta, [0.2])
    steady = heat_jump_fourier_1d(x, 0.0, theta0, theta1, beta)
    assert early[0] == pytest.approx(theta0)
    assert early[-1] == pytest.approx(theta1)
    assert np.allclose(late, steady)
    right = heat_jump_fourier_1d(np.array([1e-12]), 0.0, theta0, theta1, beta)
    left = heat_jump_fourier_1d(np.array([0.0]), 0.0, theta0, theta1, beta)
    assert right[0] - left[0] == pytest.approx(beta)


@pytest.fixture
def circle_problem():
    """Circle targets on [-1, 1]² with h = 1/16 matched by a rotation."""
    grid = SplitGrid(2, 0.0625)
    c = circle()
    pair = SubmanifoldPair(c)
    phi = RotationMap(c, c, 0.3)

    def g_plus(x):
        theta = 0.2 + 0.3 * x[..., 0] + 0.1 * x[..., 0] * x[..., 1]
        return np.stack([np.cos(theta), np.sin(theta)], axis=-1)

    problem = AdmissibleProblem.from_forms(grid, pair, pair, phi, g_plus, lambda x: phi.forward(g_plus(x)))
    return problem, g_plus


def test_blowup_consistency(circle_problem):
    """Test a smooth minimizer-like field blows up to the linear pair with P = ±1."""
    problem, g_plus = circle_problem
    u = CoupledField.from_functions(problem.grid, g_plus, lambda x: problem.interface.forward(g_plus(x)))
    report = blowup_consistency_check(problem, u, np.zeros(2), [0.25, 0.5])
    assert [s.radius for s in report.scales] == [0.5, 0.25]
    assert abs(abs(report.P[0, 0]) - 1.0) < 1e-8
    assert len(report.decay_ratios) == 1
    for scale in report.scales:
        assert scale.energy > 0
        assert scale.trace_residual < 1e-8
        assert scale.flux_residual < 1e-5
        assert scale.leakage < 0.2
    assert len(report.as_rows()) == 2


def test_blowup_scale_below_grid(circle_problem):
    """Test scales under four cells are refused."""
    problem, g_plus = circle_problem
    u = CoupledField.from_functions(problem.grid, g_plus, lambda x: problem.interface.forward(g_plus(x)))
    with pytest.raises(ScaleBelowGrid):
        blowup_consistency_check(problem, u, np.zeros(2), [0.1])
