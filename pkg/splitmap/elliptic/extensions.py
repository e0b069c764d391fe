"""Comparison maps and extensions: radial replacement, 2-D interpolation fill, cylinder extension."""

import logging
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy import sparse

from ..errors import CompatibilityError, OutsideTubularNeighborhood, SplitmapError
from ..geometry import InterfaceMap, SubmanifoldPair
from ..grid import SIDES, CoupledField, Side, SplitGrid, ball_weight, dirichlet_fill, edge_energies, interpolate
from .problem import AdmissibleProblem

logger = logging.getLogger(__name__)


class OscillationTooLarge(SplitmapError):
    """Trace oscillation is too large for the interpolation fill to stay near the targets."""
    pass


def radial_comparison(problem: AdmissibleProblem, u: CoupledField, x0: np.ndarray, r: float) -> CoupledField:
    """Replace u inside B_r(x₀) by the degree-zero extension of its sphere trace.

    Γ nodes inside the ball take the M⁺ projection of the plus trace on ∂B_r ∩ Γ and the minus
    trace is slaved through Φ⁺, so the result stays admissible.
    """
    grid = problem.grid
    grid.require_ball(x0, r)
    x0 = np.asarray(x0, dtype=float)
    free = grid.gamma_free().reshape(grid.gamma_shape)
    out = {}
    gamma_inside = None
    gamma_values = None
    for side in SIDES:
        values = u.values(side).copy()
        x = grid.coordinates(side)
        d = x - x0
        dist = np.linalg.norm(d, axis=-1)
        inside = dist < r - 1e-12
        direction = np.zeros_like(d)
        nonzero = dist > 1e-14
        direction[nonzero] = d[nonzero] / dist[nonzero][:, None]
        fallback = np.zeros(grid.dim)
        if grid.dim == 1:
            fallback[0] = -1.0 if side == Side.plus else 1.0
        else:
            fallback[0] = 1.0
        direction[~nonzero] = fallback
        targets = x0 + r * direction
        if np.any(inside):
            vals = interpolate(u, side, targets[inside])
            values[inside] = problem.pair(side).ambient.nearest_point(vals)
        if side == Side.plus:
            plane = inside[..., -1] & free
            gamma_inside = plane
            if np.any(plane):
                trace = interpolate(u, Side.plus, targets[..., -1, :][plane])
                gamma_values = problem.plus.inner.nearest_point(trace)
                values[..., -1, :][plane] = gamma_values
        out[side] = values
    if gamma_values is not None:
        out[Side.minus][..., 0, :][gamma_inside] = problem.interface.forward(gamma_values)
    for side in SIDES:
        mask = grid.dirichlet_mask(side)
        out[side][mask] = problem.boundary(side)[mask]
    return CoupledField(grid, out[Side.plus], out[Side.minus])


def half_circle_points(side: Side, samples: int) -> np.ndarray:
    """Points of the unit half circle from (−1, 0) to (1, 0), below Γ for plus, above for minus."""
    phi = np.linspace(0.0, np.pi, samples + 1)
    sign = -1.0 if side == Side.plus else 1.0
    return np.stack([-np.cos(phi), sign * np.sin(phi)], axis=-1)


def _polar_stiffness(radial: int, angular: int) -> sparse.csr_matrix:
    """Quadratic form of ∫|∇v|² on a half-disc polar grid (R+1) × (A+1)."""
    dr = 1.0 / radial
    dphi = np.pi / angular
    rho = dr * np.arange(radial + 1)
    idx = np.arange((radial + 1) * (angular + 1)).reshape(radial + 1, angular + 1)
    w_phi = np.ones(angular + 1)
    w_phi[[0, -1]] = 0.5
    w_rho = np.ones(radial + 1)
    w_rho[[0, -1]] = 0.5
    w_rad = ((rho[:-1] + 0.5 * dr) * dphi / dr)[:, None] * w_phi[None, :]
    inv_rho = np.divide(1.0, rho, out=np.zeros_like(rho), where=rho > 0)
    w_ang = np.broadcast_to((dr * inv_rho / dphi * w_rho)[:, None], (radial + 1, angular))
    a = np.concatenate([idx[:-1, :].ravel(), idx[:, :-1].ravel()])
    b = np.concatenate([idx[1:, :].ravel(), idx[:, 1:].ravel()])
    w = np.concatenate([w_rad.ravel(), w_ang.ravel()])
    rows = np.concatenate([a, b, a, b])
    cols = np.concatenate([a, b, b, a])
    vals = np.concatenate([w, w, -w, -w])
    n = idx.size
    return sparse.csr_matrix((vals, (rows, cols)), shape=(n, n))


def _arc_energy(eta: np.ndarray, arc_step: float) -> float:
    return float(np.sum(np.diff(eta, axis=0) ** 2) / arc_step)


def _arc_deviation(eta: np.ndarray, p: np.ndarray, arc_step: float) -> float:
    w = np.full(len(eta), arc_step)
    w[[0, -1]] *= 0.5
    return float(np.sum(w * np.sum((eta - p) ** 2, axis=-1)))


@dataclass
class PolarExtension:
    """Extension on the unit disc split by the diameter Γ₁ = {x₂ = 0}.

    Node (i, j) sits at radius i/R on the ray through the j-th half-circle sample.
    """

    radii: np.ndarray
    points: dict
    values: dict
    energy: dict
    trace_energy: dict
    deviation: dict
    oscillation: dict
    constant: dict
    gamma_residual: float
    diameter_distance: float

    def max_constant(self) -> float:
        return max(self.constant.values())


def interpolation_extension_2d(eta_plus: np.ndarray, eta_minus: np.ndarray,
                               plus: SubmanifoldPair, minus: SubmanifoldPair,
                               interface: InterfaceMap, epsilon: float = 0.1, q: float = 2.0,
                               delta: float = 0.05, radial_cells: int = 32,
                               p_plus: Optional[np.ndarray] = None,
                               p_minus: Optional[np.ndarray] = None,
                               tol: float = 1e-9) -> PolarExtension:
    """Fill the half discs from half-circle traces by diameter interpolation and projection.

    eta_plus / eta_minus are sampled at half_circle_points(side, A), A = len − 1. The diameter
    carries Π_{M⁺} of the linear interpolant of the plus endpoints; the minus diameter is its
    image under Φ⁺. The measured constant C solves E = ε·D + C ε^{−q}·L for each side.
    """
    eta = {Side.plus: np.asarray(eta_plus, dtype=float), Side.minus: np.asarray(eta_minus, dtype=float)}
    if eta[Side.plus].shape != eta[Side.minus].shape:
        raise ValueError("Half-circle traces must have the same sampling")
    angular = len(eta[Side.plus]) - 1
    arc_step = np.pi / angular
    ends = eta[Side.plus][[0, -1]]
    if np.max(plus.inner.distance(ends)) > tol:
        raise CompatibilityError("Plus trace endpoints are not on M+",
                                 distance=float(np.max(plus.inner.distance(ends))))
    mismatch = float(np.max(np.linalg.norm(interface.forward(ends) - eta[Side.minus][[0, -1]], axis=-1)))
    if mismatch > tol:
        raise CompatibilityError(f"Minus trace endpoints differ from Φ+ of the plus endpoints by {mismatch:.3e}",
                                 residual=mismatch)

    anchors = {Side.plus: p_plus, Side.minus: p_minus}
    trace_energy, deviation, oscillation = {}, {}, {}
    for side in SIDES:
        e = eta[side]
        p = np.mean(e, axis=0) if anchors[side] is None else np.asarray(anchors[side], dtype=float)
        anchors[side] = p
        trace_energy[side] = _arc_energy(e, arc_step)
        deviation[side] = _arc_deviation(e, p, arc_step) + float(np.sum((e[[0, -1]] - p) ** 2))
        oscillation[side] = trace_energy[side] * deviation[side]
        if oscillation[side] > delta ** 2 * epsilon ** q:
            raise OscillationTooLarge(
                f"{side.value} trace oscillation {oscillation[side]:.3e} exceeds δ²ε^q = {delta ** 2 * epsilon ** q:.3e}",
                side=side.value, oscillation=oscillation[side])

    radii = np.arange(radial_cells + 1) / radial_cells
    L = _polar_stiffness(radial_cells, angular)
    fixed = np.zeros((radial_cells + 1, angular + 1), dtype=bool)
    fixed[-1, :] = fixed[0, :] = fixed[:, 0] = fixed[:, -1] = True

    # the rays j = 0 and j = A run along the diameter to t = −ρ and t = ρ
    t = np.concatenate([-radii[::-1], radii[1:]])
    w_plus = 0.5 * (1 - t)[:, None] * ends[0] + 0.5 * (1 + t)[:, None] * ends[1]
    try:
        diameter_plus = plus.inner.nearest_point(w_plus)
    except OutsideTubularNeighborhood as exc:
        raise OscillationTooLarge("Diameter interpolant left the tubular neighborhood of M+",
                                  **exc.context) from exc
    diameter = {Side.plus: diameter_plus, Side.minus: interface.forward(diameter_plus)}

    points, values, energy, constant = {}, {}, {}, {}
    center = radial_cells
    for side in SIDES:
        pts = radii[:, None, None] * half_circle_points(side, angular)[None, :, :]
        arr = np.zeros((radial_cells + 1, angular + 1, eta[side].shape[-1]))
        arr[-1, :] = eta[side]
        arr[:, 0] = diameter[side][center::-1]
        arr[:, -1] = diameter[side][center:]
        arr[0, :] = diameter[side][center]
        flat = dirichlet_fill(L, arr.reshape(-1, arr.shape[-1]), fixed.ravel())
        try:
            projected = (plus if side == Side.plus else minus).ambient.nearest_point(flat)
        except OutsideTubularNeighborhood as exc:
            raise OscillationTooLarge(f"Harmonic fill of the {side.value} half disc left the "
                                      f"tubular neighborhood", **exc.context) from exc
        projected[fixed.ravel()] = flat[fixed.ravel()]
        values[side] = projected.reshape(arr.shape)
        points[side] = pts
        V = values[side].reshape(-1, arr.shape[-1])
        energy[side] = float(np.sum(V * (L @ V)))
        scale = epsilon ** (-q) * deviation[side]
        constant[side] = max(0.0, (energy[side] - epsilon * trace_energy[side]) / scale) if scale > 0 else 0.0

    gamma_residual = float(np.max(np.linalg.norm(
        values[Side.minus][:, [0, -1]] - interface.forward(values[Side.plus][:, [0, -1]]), axis=-1)))
    diameter_distance = float(np.max(plus.inner.distance(values[Side.plus][:, [0, -1]].reshape(-1, eta[Side.plus].shape[-1]))))
    logger.info(f"Interpolation extension: energies {energy[Side.plus]:.3e}/{energy[Side.minus]:.3e}, "
                f"measured constant {max(constant.values()):.3e}")
    return PolarExtension(radii, points, values, energy, trace_energy, deviation, oscillation,
                          constant, gamma_residual, diameter_distance)


@dataclass
class CylinderData:
    """Boundary data of one half cylinder C^±_δ = B^±_δ × [−δ, δ] in coordinates (y₁, t, y₂).

    bottom/top take points y = (y₁, y₂) of the half disc B^±_δ; lateral takes points of the half
    circle |y| = δ and is independent of t.
    """

    bottom: Callable[[np.ndarray], np.ndarray]
    top: Callable[[np.ndarray], np.ndarray]
    lateral: Callable[[np.ndarray], np.ndarray]


@dataclass
class CylinderExtension:
    grid: SplitGrid
    extension: CoupledField
    energy: dict
    deviation: dict
    face_energy: dict
    face_deviation: dict
    constant: float
    deviation_constant: float
    hypothesis_residual: float
    gamma_residual: float
    anchor: np.ndarray


def _cylinder_boundary_value(data: CylinderData, pts: np.ndarray, delta: float) -> np.ndarray:
    """Evaluate the boundary data at points of ∂C (coordinates (y₁, t, y₂))."""
    y = pts[..., [0, 2]]
    t = pts[..., 1]
    out = np.asarray(data.lateral(y), dtype=float).copy()
    on_bottom = t <= -delta * (1 - 1e-12)
    on_top = t >= delta * (1 - 1e-12)
    if np.any(on_bottom):
        out[on_bottom] = data.bottom(y[on_bottom])
    if np.any(on_top):
        out[on_top] = data.top(y[on_top])
    return out


def _half_disc_face(grid: SplitGrid, values: np.ndarray, side: Side, delta: float,
                    index: int, p: np.ndarray) -> tuple[float, float]:
    """(∫|∇u|², ∫|u − p|²) over the half disc at t-index `index` of one side array."""
    h = grid.spacing
    face = values[:, index, :, :]
    coords = grid.coordinates(side)[:, index, :, :][..., [0, 2]]
    n1, n2 = face.shape[:2]
    w1 = np.ones(n1)
    w1[[0, -1]] = 0.5
    w2 = np.ones(n2)
    w2[[0, -1]] = 0.5
    energy = 0.0
    dx = np.diff(face, axis=0)
    mid = 0.5 * (coords[1:] + coords[:-1])
    weight = ball_weight(np.linalg.norm(mid, axis=-1), delta, h) * w2[None, :]
    energy += float(np.sum(np.sum(dx ** 2, axis=-1) * weight))
    dy = np.diff(face, axis=1)
    mid = 0.5 * (coords[:, 1:] + coords[:, :-1])
    weight = ball_weight(np.linalg.norm(mid, axis=-1), delta, h) * w1[:, None]
    energy += float(np.sum(np.sum(dy ** 2, axis=-1) * weight))
    node_w = np.outer(w1, w2) * ball_weight(np.linalg.norm(coords, axis=-1), delta, h) * h ** 2
    dev = float(np.sum(node_w * np.sum((face - p) ** 2, axis=-1)))
    return energy, dev


def homogeneous_cylinder_extension(plus: CylinderData, minus: CylinderData, pair_plus: SubmanifoldPair,
                                   pair_minus: SubmanifoldPair, interface: InterfaceMap, delta: float,
                                   cells: int = 8, arc_samples: int = 256,
                                   anchor: Optional[np.ndarray] = None) -> CylinderExtension:
    """ū(x) = u(Π(x)) with Π the radial projection from the cylinder centre onto ∂C.

    Γ is the face y₂ = 0; Γ values of the plus side are projected to M⁺ and the minus side is
    set to Φ⁺ of them. Reports c with E(ū) = c·δ·[E(u₁) + E(u₂) + δE(u₀)] (maximum over sides)
    and the analogous constant for the L² deviation from the anchor p* (default: lateral mean).
    """
    h = delta / cells
    grid = SplitGrid(3, h, ((-delta, delta),) * 3)
    data = {Side.plus: plus, Side.minus: minus}
    pairs = {Side.plus: pair_plus, Side.minus: pair_minus}
    arc = {s: delta * half_circle_points(s, arc_samples) for s in SIDES}
    arc_step = delta * np.pi / arc_samples

    values = {}
    for side in SIDES:
        x = grid.coordinates(side)
        gauge = np.maximum(np.linalg.norm(x[..., [0, 2]], axis=-1), np.abs(x[..., 1])) / delta
        at_center = gauge < 1e-12
        direction = np.where(at_center[..., None], np.array([1.0, 0.0, 0.0]) * delta, x)
        gauge = np.where(at_center, 1.0, gauge)
        b = direction / gauge[..., None]
        values[side] = _cylinder_boundary_value(data[side], b, delta)

    free_gamma = values[Side.plus][..., -1, :]
    data_minus_gamma = values[Side.minus][..., 0, :].copy()
    gamma_plus = pair_plus.inner.nearest_point(free_gamma)
    values[Side.plus][..., -1, :] = gamma_plus
    values[Side.minus][..., 0, :] = interface.forward(gamma_plus)
    hypothesis = float(np.max(np.linalg.norm(data_minus_gamma - interface.forward(free_gamma), axis=-1)))
    if hypothesis > 1e-8:
        logger.warning(f"Cylinder data violate the interface matching by {hypothesis:.3e}")
    gamma_residual = float(np.max(np.linalg.norm(
        values[Side.minus][..., 0, :] - interface.forward(values[Side.plus][..., -1, :]), axis=-1)))
    u = CoupledField(grid, values[Side.plus], values[Side.minus])

    if anchor is None:
        anchor = np.mean(np.concatenate([np.asarray(plus.lateral(arc[Side.plus])),
                                         np.asarray(minus.lateral(arc[Side.minus]))]), axis=0)
    anchor = np.asarray(anchor, dtype=float)

    energy, deviation, face_energy, face_deviation = {}, {}, {}, {}
    ratios, dev_ratios = [], []
    for side in SIDES:
        e = 0.0
        for mid, contrib in edge_energies(grid, u.values(side), side):
            e += float(np.sum(contrib * ball_weight(np.linalg.norm(mid[..., [0, 2]], axis=-1), delta, h)))
        energy[side] = e
        x = grid.coordinates(side)
        node_w = grid.mass[side].reshape(grid.side_shape(side)) * ball_weight(
            np.linalg.norm(x[..., [0, 2]], axis=-1), delta, h)
        deviation[side] = float(np.sum(node_w * np.sum((u.values(side) - anchor) ** 2, axis=-1)))

        e1, w1 = _half_disc_face(grid, u.values(side), side, delta, 0, anchor)
        e2, w2 = _half_disc_face(grid, u.values(side), side, delta, -1, anchor)
        lateral = np.asarray(data[side].lateral(arc[side]), dtype=float)
        e0 = _arc_energy(lateral, arc_step)
        w0 = _arc_deviation(lateral, anchor, arc_step)
        face_energy[side] = {"bottom": e1, "top": e2, "lateral": e0}
        face_deviation[side] = {"bottom": w1, "top": w2, "lateral": w0}
        rhs = delta * (e1 + e2 + delta * e0)
        rhs_w = delta * (w1 + w2 + delta * w0)
        ratios.append(energy[side] / rhs if rhs > 0 else 0.0)
        dev_ratios.append(deviation[side] / rhs_w if rhs_w > 0 else 0.0)

    constant = max(ratios)
    logger.info(f"Cylinder extension at δ={delta}: c={constant:.4g}, c_W={max(dev_ratios):.4g}")
    return CylinderExtension(grid, u, energy, deviation, face_energy, face_deviation, constant,
                             max(dev_ratios), hypothesis, gamma_residual, anchor)
