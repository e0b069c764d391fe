"""Tests for target manifolds, interface maps and charts."""

import numpy as np
import pytest

from splitmap.errors import OutsideTubularNeighborhood
from splitmap.geometry import (
    AngleChart,
    DiffeomorphismMap,
    GraphChart,
    GraphSurface,
    IdentityMap,
    NonTangentInput,
    ProjectedManifold,
    RotationMap,
    ScalingMap,
    SliceChart,
    SubmanifoldPair,
    Torus,
    chart_pair,
    circle,
    equator,
    interface_flux_transfer,
    second_form_eval,
    sphere,
)


@pytest.fixture
def rng():
    """Seeded generator."""
    return np.random.default_rng(7)


def test_sphere_projection(rng):
    """Test nearest-point projection onto the unit sphere."""
    s = sphere()
    p = np.array([[2.0, 0.0, 0.0], [0.0, 0.5, 0.5]])
    q = s.nearest_point(p)
    assert np.allclose(q[0], [1.0, 0.0, 0.0])
    assert np.allclose(np.linalg.norm(q, axis=-1), 1.0)
    assert np.all(s.contains(s.sample(16, rng)))


def test_sphere_projection_rejects_center():
    """Test the origin is outside the tubular neighborhood of the sphere."""
    with pytest.raises(OutsideTubularNeighborhood):
        sphere().nearest_point(np.zeros(3))


def test_sphere_second_form_sign():
    """Test A(p)(X, X) = |X|² p on the unit sphere."""
    p = np.array([0.0, 0.0, 1.0])
    X = np.array([0.3, -0.4, 0.0])
    assert np.allclose(second_form_eval(p, X, X, sphere()), [0.0, 0.0, 0.25])


def test_second_form_rejects_normal_vector():
    """Test a normal vector is refused by the checked second form."""
    p = np.array([1.0, 0.0, 0.0])
    with pytest.raises(NonTangentInput):
        second_form_eval(p, p, p, sphere())


def test_tangent_basis_orthonormal(rng):
    """Test tangent frames are orthonormal and tangent."""
    s = sphere()
    p = s.sample(5, rng)
    T = s.tangent_basis(p)
    assert T.shape == (5, 3, 2)
    gram = np.einsum("nai,naj->nij", T, T)
    assert np.allclose(gram, np.eye(2))
    assert np.allclose(np.einsum("na,nai->ni", p, T), 0.0)


def test_equator_inside_sphere():
    """Test the equator projects within its coordinate plane."""
    e = equator()
    q = e.nearest_point(np.array([0.0, 1.5, 0.3]))
    assert np.allclose(q, [0.0, 1.0, 0.0])
    assert e.dim == 1
    assert e.name == "S1"


def test_torus_projection():
    """Test torus projection and parametrization agree."""
    t = Torus(2.0, 0.5)
    assert np.allclose(t.nearest_point(np.array([2.7, 0.0, 0.0])), [2.5, 0.0, 0.0])
    pts = t.parametrize(np.array([0.3, 1.2]), np.array([2.0, -0.4]))
    assert np.all(t.contains(pts))
    with pytest.raises(OutsideTubularNeighborhood):
        t.nearest_point(np.array([2.0, 0.0, 0.0]))


def test_torus_requires_thin_tube():
    """Test the torus refuses minor >= major."""
    with pytest.raises(ValueError):
        Torus(1.0, 1.0)


def test_graph_surface_projection():
    """Test a point pushed off the paraboloid along its normal projects back."""
    g = GraphSurface(
        f=lambda xi: 0.5 * np.sum(xi ** 2, axis=-1),
        grad=lambda xi: xi,
        hess=lambda xi: np.broadcast_to(np.eye(2), xi.shape + (2,)),
    )
    xi = np.array([0.2, -0.1])
    foot = g.lift(xi)
    normal = np.append(-xi, 1.0) / np.sqrt(1.0 + xi @ xi)
    assert np.allclose(g.nearest_point(foot + 0.05 * normal), foot, atol=1e-10)


def test_projected_manifold_matches_sphere(rng):
    """Test the finite-difference projector of a user projection."""
    s = sphere()
    m = ProjectedManifold(lambda p: s.nearest_point(p), 3, 2, 1.0, 2.0)
    p = s.sample(3, rng)
    assert np.allclose(m.tangent_projector(p), s.tangent_projector(p), atol=1e-6)


def test_submanifold_pair_normal_basis(rng):
    """Test the normal-in-N frame of the equator inside S²."""
    pair = SubmanifoldPair(sphere(), equator())
    assert pair.tangent_dim == 1
    assert pair.normal_dim == 1
    N = pair.normal_basis(np.array([1.0, 0.0, 0.0]))
    assert N.shape == (3, 1)
    assert np.allclose(np.abs(N[:, 0]), [0.0, 0.0, 1.0])
    assert pair.containment_residual(np.array([0.0, 1.0, 0.0])) < 1e-12
    pair.validate(rng)


def test_submanifold_pair_rejects_mismatch():
    """Test M must live in the ambient space of N."""
    with pytest.raises(ValueError):
        SubmanifoldPair(sphere(), circle())


def test_rotation_round_trip_and_adjoint(rng):
    """Test Φ⁻∘Φ⁺ = id and ⟨DΦ v, w⟩ = ⟨v, DΦᵗ w⟩."""
    c = circle()
    phi = RotationMap(c, c, 0.7)
    a = c.sample(6, rng)
    assert phi.round_trip_residual(a) < 1e-14
    v = c.project_tangent(a, rng.standard_normal((6, 2)))
    w = c.project_tangent(phi.forward(a), rng.standard_normal((6, 2)))
    lhs = np.sum(phi.derivative(a, v) * w, axis=-1)
    rhs = np.sum(v * phi.adjoint_derivative(a, w), axis=-1)
    assert np.allclose(lhs, rhs)
    assert phi.is_isometry


def test_identity_jacobian_is_tangent_projector(rng):
    """Test DΦ of the identity map is the tangent projector."""
    s = sphere()
    a = s.sample(4, rng)
    assert np.allclose(IdentityMap(s).jacobian(a), s.tangent_projector(a))


def test_scaling_map():
    """Test the scaling map onto a scaled circle."""
    phi = ScalingMap(circle(1.0), circle(2.0), 2.0)
    a = np.array([0.0, 1.0])
    assert np.allclose(phi.forward(a), [0.0, 2.0])
    assert np.allclose(phi.inverse(phi.forward(a)), a)
    assert not phi.is_isometry
    with pytest.raises(ValueError):
        ScalingMap(circle(), circle(), -1.0)


def test_angle_chart():
    """Test the flat circle chart: constant metric, zero Christoffel symbols."""
    c = circle()
    chart = AngleChart(c, np.array([1.0, 0.0]), 0.5)
    U = np.array([[0.2], [-0.6]])
    p = chart.to_manifold(U)
    assert np.allclose(np.linalg.norm(p, axis=-1), 1.0)
    assert np.allclose(chart.from_manifold(p), U)
    assert np.allclose(chart.metric(U), 0.25)
    assert np.allclose(chart.christoffel(U), 0.0)


def test_slice_chart_round_trip():
    """Test the slice chart maps U² = 0 onto M and inverts."""
    pair = SubmanifoldPair(sphere(), equator())
    chart = SliceChart(pair, np.array([1.0, 0.0, 0.0]), 0.5)
    assert np.allclose(chart.to_manifold(np.zeros(2)), [1.0, 0.0, 0.0])
    on_slice = chart.slice_point(np.array([0.4]))
    assert abs(on_slice[2]) < 1e-12
    U = np.array([0.3, -0.2])
    p = chart.to_manifold(U)
    assert sphere().contains(p)
    assert np.allclose(chart.from_manifold(p), U, atol=1e-7)
    assert chart.in_domain(U)
    assert not chart.in_domain(np.array([1.2, 0.0]))


def test_graph_chart_christoffel_finite():
    """Test the graph chart of the sphere has a regular metric at its center."""
    chart = GraphChart(sphere(), np.array([0.0, 0.0, 1.0]), 0.3)
    gamma = chart.christoffel(np.zeros(2))
    assert gamma.shape == (2, 2, 2)
    assert np.all(np.isfinite(gamma))
    assert np.allclose(chart.metric(np.zeros(2)), 0.09 * np.eye(2), atol=1e-6)


def test_chart_pair_circles_use_angle_charts():
    """Test matched circle charts under a rotation are flat angle charts."""
    c = circle()
    pair = SubmanifoldPair(c)
    phi = RotationMap(c, c, 0.4)
    chart_p, chart_m = chart_pair(pair, pair, phi, np.array([1.0, 0.0]), 0.5)
    assert isinstance(chart_p, AngleChart)
    assert isinstance(chart_m, AngleChart)
    U = np.array([[0.3]])
    assert np.allclose(chart_m.to_manifold(U), phi.forward(chart_p.to_manifold(U)))


def test_chart_pair_slices_match_through_interface():
    """Test the minus slice chart is Φ⁺ of the plus slice chart on U² = 0."""
    pair = SubmanifoldPair(sphere(), equator())
    phi = RotationMap(equator(), equator(), 0.3)
    chart_p, chart_m = chart_pair(pair, pair, phi, np.array([1.0, 0.0, 0.0]), 0.5)
    U1 = np.array([0.25])
    assert np.allclose(chart_m.slice_point(U1), phi.forward(chart_p.slice_point(U1)))


def wavy_graph():
    return GraphSurface(
        f=lambda xi: np.sin(xi[..., 0]) * np.cos(xi[..., 1]),
        grad=lambda xi: np.stack([np.cos(xi[..., 0]) * np.cos(xi[..., 1]),
                                  -np.sin(xi[..., 0]) * np.sin(xi[..., 1])], axis=-1),
        hess=lambda xi: np.stack([
            np.stack([-np.sin(xi[..., 0]) * np.cos(xi[..., 1]), -np.cos(xi[..., 0]) * np.sin(xi[..., 1])], axis=-1),
            np.stack([-np.cos(xi[..., 0]) * np.sin(xi[..., 1]), -np.sin(xi[..., 0]) * np.cos(xi[..., 1])], axis=-1),
        ], axis=-2),
    )


def test_tangent_projectors_are_idempotent(rng):
    """Test P² = P and Pᵀ = P at random points of every built-in manifold."""
    s = sphere()
    samples = [
        (s, s.sample(32, rng)),
        (equator(), equator().sample(32, rng)),
        (Torus(2.0, 0.5), Torus(2.0, 0.5).sample(32, rng)),
        (wavy_graph(), wavy_graph().lift(rng.uniform(-1.0, 1.0, (32, 2)))),
        (ProjectedManifold(lambda p: s.nearest_point(p), 3, 2, 1.0, 2.0), s.sample(8, rng)),
    ]
    for manifold, p in samples:
        P = manifold.tangent_projector(p)
        assert np.max(np.abs(P @ P - P)) <= 1e-12, manifold.name
        assert np.max(np.abs(P - np.swapaxes(P, -1, -2))) <= 1e-12, manifold.name
        assert np.allclose(np.trace(P, axis1=-2, axis2=-1), manifold.dim)


def test_torus_projection_is_nearest(rng):
    """Test the torus projection against a brute-force search over a fine parameter grid."""
    t = Torus(2.0, 0.5)
    a, b = np.meshgrid(np.linspace(0, 2 * np.pi, 1440, endpoint=False),
                       np.linspace(0, 2 * np.pi, 720, endpoint=False), indexing="ij")
    cloud = t.parametrize(a.ravel(), b.ravel())
    p = t.sample(6, rng) + np.clip(0.12 * rng.standard_normal((6, 3)), -0.2, 0.2)
    q = t.nearest_point(p)
    exact = np.linalg.norm(q - p, axis=-1)
    assert np.allclose(t.distance(p), exact, atol=1e-8)
    assert np.all(t.contains(q))
    for i in range(len(p)):
        d = np.linalg.norm(cloud - p[i], axis=-1)
        j = int(np.argmin(d))
        assert d[j] >= exact[i] - 1e-12
        assert d[j] - exact[i] <= 1e-3
        assert np.linalg.norm(cloud[j] - q[i]) <= 0.02


def test_graph_second_form_matches_curve_acceleration():
    """Test A(p)(X, Y) is minus the normal part of the mixed second derivative of the lift."""
    g = wavy_graph()
    xi = np.array([0.3, -0.4])
    v = np.array([0.7, 0.2])
    w = np.array([-0.1, 0.5])
    eps = 1e-4
    mixed = (g.lift(xi + eps * (v + w)) - g.lift(xi + eps * (v - w))
             - g.lift(xi - eps * (v - w)) + g.lift(xi - eps * (v + w))) / (4 * eps ** 2)
    p = g.lift(xi)
    grad = g.grad(xi)
    X = np.append(v, grad @ v)
    Y = np.append(w, grad @ w)
    P = g.tangent_projector(p)
    assert np.allclose(P @ X, X)
    expected = -(mixed - P @ mixed)
    assert np.allclose(g.second_form(p, X, Y), expected, atol=1e-6)
    assert np.allclose(g.second_form(p, X, Y), g.second_form(p, Y, X))


def christoffel_from_metric(chart, U, step=1e-3):
    """½ hᵏˡ(∂ᵢh_lj + ∂ⱼh_li − ∂ₗh_ij) with centred differences of the chart metric."""
    d = chart.dim
    dh = np.stack([(chart.metric(U + step * e) - chart.metric(U - step * e)) / (2 * step)
                   for e in np.eye(d)])
    lower = 0.5 * (np.einsum("ilj->lij", dh) + np.einsum("jli->lij", dh) - dh)
    return np.einsum("kl,lij->kij", np.linalg.inv(chart.metric(U)), lower)


def test_christoffel_symbols_match_metric_derivatives():
    """Test chart Christoffel symbols against differences of the metric away from the centre."""
    charts = [
        (GraphChart(sphere(), np.array([0.0, 0.0, 1.0]), 0.3), np.array([0.3, -0.2])),
        (SliceChart(SubmanifoldPair(sphere(), equator()), np.array([1.0, 0.0, 0.0]), 0.5),
         np.array([0.35, 0.25])),
    ]
    for chart, U in charts:
        gamma = chart.christoffel(U)
        assert np.max(np.abs(gamma)) > 1e-3
        assert np.max(np.abs(gamma - christoffel_from_metric(chart, U))) <= 1e-5


def test_mixed_block_constant():
    """Test the mixed metric block of the equator slice chart vanishes with U²."""
    chart = SliceChart(SubmanifoldPair(sphere(), equator()), np.array([1.0, 0.0, 0.0]), 0.5)
    U = np.array([[0.2, 0.1], [-0.3, 0.4], [0.0, -0.5]])
    constant = chart.mixed_block_constant(U)
    assert np.isfinite(constant)
    assert 0.0 <= constant < 1e-6
    assert chart.mixed_block_constant(np.array([[0.3, 0.0]])) == 0.0
    assert GraphChart(sphere(), np.array([0.0, 0.0, 1.0]), 0.3).mixed_block_constant(U) == 0.0


EPS = 0.3


def wobble_map():
    """Circle diffeomorphism θ ↦ θ + ε sin θ with a Newton inverse."""
    c = circle()

    def forward(a):
        theta = np.arctan2(a[..., 1], a[..., 0])
        phi = theta + EPS * np.sin(theta)
        return np.stack([np.cos(phi), np.sin(phi)], axis=-1)

    def inverse(b):
        phi = np.arctan2(b[..., 1], b[..., 0])
        psi = phi.copy()
        for _ in range(40):
            psi = psi - (psi + EPS * np.sin(psi) - phi) / (1.0 + EPS * np.cos(psi))
        return np.stack([np.cos(psi), np.sin(psi)], axis=-1)

    return DiffeomorphismMap(c, c, forward, inverse)


def test_diffeomorphism_map_derivative_and_adjoint(rng):
    """Test the finite-difference DΦ and its adjoint against the analytic derivative."""
    phi = wobble_map()
    theta = rng.uniform(-np.pi, np.pi, 8)
    a = np.stack([np.cos(theta), np.sin(theta)], axis=-1)
    image = theta + EPS * np.sin(theta)
    t_src = np.stack([-np.sin(theta), np.cos(theta)], axis=-1)
    t_tgt = np.stack([-np.sin(image), np.cos(image)], axis=-1)
    stretch = 1.0 + EPS * np.cos(theta)
    exact = stretch[:, None, None] * t_tgt[:, :, None] * t_src[:, None, :]

    assert phi.round_trip_residual(a) < 1e-12
    assert not phi.is_isometry
    assert np.allclose(phi.jacobian(a), exact, atol=1e-7)
    assert np.allclose(phi.derivative(a, t_src), stretch[:, None] * t_tgt, atol=1e-7)
    assert np.allclose(phi.adjoint_derivative(a, t_tgt), stretch[:, None] * t_src, atol=1e-7)

    v = circle().project_tangent(a, rng.standard_normal((8, 2)))
    w = rng.standard_normal((8, 2))
    lhs = np.sum(phi.derivative(a, v) * w, axis=-1)
    rhs = np.sum(v * phi.adjoint_derivative(a, w), axis=-1)
    assert np.allclose(lhs, rhs, atol=1e-12)


def test_interface_flux_transfer_drops_normal_part(rng):
    """Test the transferred flux only sees the M⁻-tangential part of the minus flux."""
    phi = wobble_map()
    theta = rng.uniform(-np.pi, np.pi, 5)
    a = np.stack([np.cos(theta), np.sin(theta)], axis=-1)
    image = theta + EPS * np.sin(theta)
    t_src = np.stack([-np.sin(theta), np.cos(theta)], axis=-1)
    t_tgt = np.stack([-np.sin(image), np.cos(image)], axis=-1)
    n_tgt = np.stack([np.cos(image), np.sin(image)], axis=-1)
    flux = 0.8 * t_tgt + 5.0 * n_tgt
    moved = interface_flux_transfer(a, flux, phi)
    assert np.allclose(moved, (0.8 * (1.0 + EPS * np.cos(theta)))[:, None] * t_src, atol=1e-7)
    assert np.allclose(np.sum(moved * a, axis=-1), 0.0, atol=1e-7)
