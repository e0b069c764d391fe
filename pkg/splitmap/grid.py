"""Split tensor grid with a double-valued interface plane and discrete calculus.

The box is cut by the interface Γ = {xₙ = 0}. Ω⁺ = {xₙ ≤ 0} and Ω⁻ = {xₙ ≥ 0}, the unit
normal ν = +eₙ points from Ω⁺ into Ω⁻. Each side is stored as its own box array including the
Γ plane, so Γ nodes carry two values: the last normal index of the plus array (trace_plus)
and the first normal index of the minus array (trace_minus).

Energies use the edge form ½ Σ_edges w_e |Δu|² h^{n-2} with trapezoidal cross weights; it is
the quadratic form of the assembled stiffness matrix, so descent, flow and diagnostics all
measure the same functional.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from functools import cached_property
from typing import Callable, Optional

import numpy as np
from scipy import sparse
from scipy.interpolate import RegularGridInterpolator
from scipy.sparse.linalg import spsolve

from .errors import BallExceedsDomain, GridError

logger = logging.getLogger(__name__)


class Side(str, Enum):
    plus = "plus"
    minus = "minus"


SIDES = (Side.plus, Side.minus)


class NodeClass(IntEnum):
    interior_plus = 0
    interior_minus = 1
    gamma = 2
    sigma_plus = 3
    sigma_minus = 4
    sigma_edge = 5


class Carrier(str, Enum):
    gamma = "gamma"
    sigma_plus = "sigma_plus"
    sigma_minus = "sigma_minus"
    sphere = "sphere"


def _path_laplacian(n: int) -> sparse.csr_matrix:
    d = sparse.diags([-np.ones(n - 1), np.ones(n - 1)], [0, 1], shape=(n - 1, n))
    return (d.T @ d).tocsr()


def _trapezoid(n: int) -> np.ndarray:
    w = np.ones(n)
    w[0] = w[-1] = 0.5
    return w


def box_stiffness(counts: tuple[int, ...], spacing: float) -> sparse.csr_matrix:
    """Stiffness of ½∫|∇u|² on a box grid, K = h^{d-2} Σᵢ W ⊗ .. ⊗ Lᵢ ⊗ .. ⊗ W."""
    d = len(counts)
    if d == 0:
        return sparse.csr_matrix((1, 1))
    total = None
    for i in range(d):
        term = sparse.identity(1, format="csr")
        for j, n in enumerate(counts):
            factor = _path_laplacian(n) if i == j else sparse.diags(_trapezoid(n))
            term = sparse.kron(term, factor, format="csr")
        total = term if total is None else total + term
    return (spacing ** (d - 2) * total).tocsr()


def box_mass(counts: tuple[int, ...], spacing: float) -> np.ndarray:
    """Lumped trapezoidal mass (flat, C order)."""
    w = np.ones(())
    for n in counts:
        w = np.multiply.outer(w, _trapezoid(n))
    return spacing ** len(counts) * np.asarray(w).ravel()


def dirichlet_fill(K: sparse.spmatrix, values: np.ndarray, fixed: np.ndarray) -> np.ndarray:
    """Discrete harmonic extension of the fixed rows of `values`, componentwise."""
    K = sparse.csr_matrix(K)
    out = np.array(values, dtype=float, copy=True)
    free = ~fixed
    if not np.any(free):
        return out
    K_ff = K[free][:, free].tocsc()
    rhs = -(K[free][:, fixed] @ out[fixed])
    sol = spsolve(K_ff, rhs)
    out[free] = sol.reshape(out[free].shape)
    return out


@dataclass(frozen=True)
class SplitGrid:
    """Uniform box grid with Γ on the plane xₙ = 0."""

    dim: int
    spacing: float
    extents: Optional[tuple[tuple[float, float], ...]] = None

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise GridError(f"Grid dimension must be 1, 2 or 3, got {self.dim}")
        if not self.spacing > 0:
            raise GridError("Grid spacing must be positive")
        ext = self.extents or tuple((-1.0, 1.0) for _ in range(self.dim))
        ext = tuple((float(a), float(b)) for a, b in ext)
        object.__setattr__(self, "extents", ext)
        if len(ext) != self.dim:
            raise GridError(f"Expected {self.dim} extents, got {len(ext)}")
        for i, (a, b) in enumerate(ext):
            cells = (b - a) / self.spacing
            if b <= a or abs(cells - round(cells)) > 1e-9 * max(1.0, cells):
                raise GridError(f"Spacing {self.spacing} does not divide extent {i}: [{a}, {b}]")
            if round(cells) < 2:
                raise GridError(f"Axis {i} needs at least two cells")
        a, b = ext[-1]
        below = -a / self.spacing
        if not (a < 0 < b) or abs(below - round(below)) > 1e-9 * max(1.0, below):
            raise GridError("The interface plane x_n = 0 must be a grid plane inside the box")
        if round(below) < 2 or round((b - 0.0) / self.spacing) < 2:
            raise GridError("Each side needs at least two cells normal to the interface")

    @classmethod
    def from_dict(cls, data: dict) -> "SplitGrid":
        return cls(dim=data["dim"], spacing=data["spacing"],
                   extents=tuple(tuple(e) for e in data["extents"]))

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "spacing": self.spacing,
            "extents": [list(e) for e in self.extents],
            "counts": list(self.counts),
            "gamma_index": self.gamma_index,
        }

    @cached_property
    def counts(self) -> tuple[int, ...]:
        return tuple(int(round((b - a) / self.spacing)) + 1 for a, b in self.extents)

    @cached_property
    def gamma_index(self) -> int:
        return int(round(-self.extents[-1][0] / self.spacing))

    @property
    def gamma_shape(self) -> tuple[int, ...]:
        return self.counts[:-1]

    @property
    def n_gamma(self) -> int:
        return int(np.prod(self.gamma_shape, dtype=int))

    def axis(self, i: int) -> np.ndarray:
        a, _ = self.extents[i]
        return a + self.spacing * np.arange(self.counts[i])

    def side_axes(self, side: Side) -> list[np.ndarray]:
        axes = [self.axis(i) for i in range(self.dim)]
        j0 = self.gamma_index
        axes[-1] = axes[-1][: j0 + 1] if side == Side.plus else axes[-1][j0:]
        axes[-1] = axes[-1].copy()
        axes[-1][-1 if side == Side.plus else 0] = 0.0
        return axes

    def side_shape(self, side: Side) -> tuple[int, ...]:
        j0 = self.gamma_index
        last = j0 + 1 if side == Side.plus else self.counts[-1] - j0
        return self.counts[:-1] + (last,)

    def n_nodes(self, side: Side) -> int:
        return int(np.prod(self.side_shape(side), dtype=int))

    def coordinates(self, side: Side) -> np.ndarray:
        """Node coordinates, shape side_shape + (n,)."""
        mesh = np.meshgrid(*self.side_axes(side), indexing="ij")
        return np.stack(mesh, axis=-1)

    def gamma_coordinates(self) -> np.ndarray:
        """Γ node coordinates, shape gamma_shape + (n,)."""
        return self.coordinates(Side.plus)[..., -1, :]

    @cached_property
    def stiffness(self) -> dict:
        return {s: box_stiffness(self.side_shape(s), self.spacing) for s in SIDES}

    @cached_property
    def mass(self) -> dict:
        return {s: box_mass(self.side_shape(s), self.spacing) for s in SIDES}

    def trapezoid_weights(self, side: Side) -> np.ndarray:
        return self.mass[side].reshape(self.side_shape(side)) / self.spacing ** self.dim

    def _tangential_boundary(self, shape: tuple[int, ...]) -> np.ndarray:
        mask = np.zeros(shape, dtype=bool)
        for i in range(self.dim - 1):
            idx = [slice(None)] * len(shape)
            idx[i] = 0
            mask[tuple(idx)] = True
            idx[i] = -1
            mask[tuple(idx)] = True
        return mask

    def gamma_plane_mask(self, side: Side) -> np.ndarray:
        mask = np.zeros(self.side_shape(side), dtype=bool)
        mask[..., -1 if side == Side.plus else 0] = True
        return mask

    def dirichlet_mask(self, side: Side) -> np.ndarray:
        """Σ± and Σ-edge nodes of one side."""
        mask = self._tangential_boundary(self.side_shape(side))
        mask[..., 0 if side == Side.plus else -1] = True
        return mask

    def interior_mask(self, side: Side) -> np.ndarray:
        return ~self.dirichlet_mask(side) & ~self.gamma_plane_mask(side)

    def gamma_free(self) -> np.ndarray:
        """Γ nodes off the box boundary (flat over the Γ plane)."""
        return ~self._tangential_boundary(self.gamma_shape).ravel()

    def gamma_flat(self, side: Side) -> np.ndarray:
        """Flat side indices of the Γ plane, ordered like gamma_coordinates()."""
        last = self.side_shape(side)[-1]
        base = np.arange(self.n_gamma) * last
        return base + (last - 1) if side == Side.plus else base

    def node_classes(self, side: Side) -> np.ndarray:
        classes = np.full(self.side_shape(side), int(
            NodeClass.interior_plus if side == Side.plus else NodeClass.interior_minus))
        classes[self.dirichlet_mask(side)] = int(
            NodeClass.sigma_plus if side == Side.plus else NodeClass.sigma_minus)
        gamma = self.gamma_plane_mask(side)
        edge = self._tangential_boundary(self.side_shape(side))
        classes[gamma & ~edge] = int(NodeClass.gamma)
        classes[gamma & edge] = int(NodeClass.sigma_edge)
        return classes

    def contains_ball(self, center: np.ndarray, radius: float) -> bool:
        center = np.asarray(center, dtype=float)
        lo = np.array([a for a, _ in self.extents])
        hi = np.array([b for _, b in self.extents])
        tol = 1e-12 * max(1.0, radius)
        return bool(np.all(center - radius >= lo - tol) and np.all(center + radius <= hi + tol))

    def require_ball(self, center: np.ndarray, radius: float) -> None:
        if not self.contains_ball(center, radius):
            raise BallExceedsDomain(f"Ball of radius {radius} at {list(np.ravel(center))} leaves the box",
                                    center=np.ravel(center), radius=radius)


@dataclass
class CoupledField:
    """Field with one value per node of each side; Γ nodes appear on both sides."""

    grid: SplitGrid
    plus: np.ndarray
    minus: np.ndarray

    def __post_init__(self):
        self.plus = np.asarray(self.plus, dtype=float)
        self.minus = np.asarray(self.minus, dtype=float)
        for side, arr in ((Side.plus, self.plus), (Side.minus, self.minus)):
            if arr.shape[:-1] != self.grid.side_shape(side):
                raise GridError(f"{side.value} values have shape {arr.shape}, "
                                f"expected {self.grid.side_shape(side)} + (k,)")

    @property
    def components(self) -> int:
        return self.plus.shape[-1]

    def values(self, side: Side) -> np.ndarray:
        return self.plus if side == Side.plus else self.minus

    @property
    def trace_plus(self) -> np.ndarray:
        return self.plus[..., -1, :]

    @property
    def trace_minus(self) -> np.ndarray:
        return self.minus[..., 0, :]

    def flat(self, side: Side) -> np.ndarray:
        v = self.values(side)
        return v.reshape(-1, v.shape[-1])

    def copy(self) -> "CoupledField":
        return CoupledField(self.grid, self.plus.copy(), self.minus.copy())

    def max_difference(self, other: "CoupledField") -> float:
        return float(max(np.max(np.abs(self.plus - other.plus)),
                         np.max(np.abs(self.minus - other.minus))))

    @classmethod
    def from_flat(cls, grid: SplitGrid, plus: np.ndarray, minus: np.ndarray) -> "CoupledField":
        return cls(grid,
                   plus.reshape(grid.side_shape(Side.plus) + (-1,)),
                   minus.reshape(grid.side_shape(Side.minus) + (-1,)))

    @classmethod
    def from_functions(cls, grid: SplitGrid, f_plus: Callable, f_minus: Callable) -> "CoupledField":
        return cls(grid, f_plus(grid.coordinates(Side.plus)), f_minus(grid.coordinates(Side.minus)))

    @classmethod
    def constant(cls, grid: SplitGrid, p_plus: np.ndarray, p_minus: np.ndarray) -> "CoupledField":
        return cls(grid,
                   np.broadcast_to(np.asarray(p_plus, float), grid.side_shape(Side.plus) + (len(p_plus),)).copy(),
                   np.broadcast_to(np.asarray(p_minus, float), grid.side_shape(Side.minus) + (len(p_minus),)).copy())


@dataclass
class TraceField:
    """Values on a node subset identified by its carrier."""

    values: np.ndarray
    carrier: Carrier
    points: Optional[np.ndarray] = None
    mask: Optional[np.ndarray] = field(default=None)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.points is not None and self.points.shape[:-1] != self.values.shape[:-1]:
            raise GridError(f"{self.carrier.value} trace has {self.values.shape[:-1]} values "
                            f"for {self.points.shape[:-1]} points")

    def norms(self) -> np.ndarray:
        return np.linalg.norm(self.values, axis=-1)

    def max_norm(self) -> float:
        n = self.norms().ravel()
        if self.mask is not None:
            n = n[np.asarray(self.mask).ravel()]
        return float(np.max(n)) if n.size else 0.0


def discrete_gradient(f: CoupledField, side: Side) -> np.ndarray:
    """∂u/∂xᵢ per node, shape side_shape + (n, k); one-sided second order at box edges."""
    v = f.values(side)
    h = f.grid.spacing
    grads = [np.gradient(v, h, axis=i, edge_order=2) for i in range(f.grid.dim)]
    return np.stack(grads, axis=-2)


def side_energy(f: CoupledField, side: Side) -> float:
    V = f.flat(side)
    return 0.5 * float(np.sum(V * (f.grid.stiffness[side] @ V)))


def discrete_energy(f: CoupledField) -> float:
    """E(u) = ½∫_{Ω⁺}|∇u|² + ½∫_{Ω⁻}|∇u|² in the edge quadrature."""
    return side_energy(f, Side.plus) + side_energy(f, Side.minus)


def edge_energies(grid: SplitGrid, values: np.ndarray, side: Side) -> list[tuple[np.ndarray, np.ndarray]]:
    """Per-axis (edge midpoints, edge contribution to ∫|∇u|²)."""
    h = grid.spacing
    coords = grid.coordinates(side)
    weights = grid.trapezoid_weights(side)
    out = []
    for i in range(grid.dim):
        diff = np.diff(values, axis=i)
        lo = [slice(None)] * grid.dim
        lo[i] = slice(None, -1)
        # the weight along axis i is 1 on every edge; cross weights are the node weights
        cross = np.take(weights, np.arange(weights.shape[i] - 1), axis=i)
        cross = cross / _trapezoid(weights.shape[i])[:-1].reshape(
            [-1 if j == i else 1 for j in range(grid.dim)])
        energy = np.sum(diff ** 2, axis=-1) * h ** (grid.dim - 2) * cross
        mid = coords[tuple(lo)] + 0.5 * h * np.eye(grid.dim)[i]
        out.append((mid, energy))
    return out


def node_energy_density(f: CoupledField, side: Side) -> np.ndarray:
    """∫|∇u|² lumped onto nodes (half of every edge to each endpoint)."""
    grid = f.grid
    dens = np.zeros(grid.side_shape(side))
    for i, (_, e) in enumerate(edge_energies(grid, f.values(side), side)):
        lo = [slice(None)] * grid.dim
        hi = [slice(None)] * grid.dim
        lo[i] = slice(None, -1)
        hi[i] = slice(1, None)
        dens[tuple(lo)] += 0.5 * e
        dens[tuple(hi)] += 0.5 * e
    return dens


def ball_weight(distance: np.ndarray, radius: float, spacing: float) -> np.ndarray:
    """Smoothed indicator of the ball, linear over one cell across the sphere."""
    return np.clip((radius - distance) / spacing + 0.5, 0.0, 1.0)


def ball_energy(f: CoupledField, center: np.ndarray, radius: float) -> float:
    """∫_{B_r(x₀)∩Ω⁺}|∇u|² + ∫_{B_r(x₀)∩Ω⁻}|∇u|²."""
    grid = f.grid
    grid.require_ball(center, radius)
    center = np.asarray(center, dtype=float)
    total = 0.0
    for side in SIDES:
        for mid, e in edge_energies(grid, f.values(side), side):
            d = np.linalg.norm(mid - center, axis=-1)
            total += float(np.sum(e * ball_weight(d, radius, grid.spacing)))
    return total


def renormalized_energy(f: CoupledField, center: np.ndarray, radius: float) -> float:
    """r^{2-n} ∫_{B_r}|∇u|²."""
    return radius ** (2 - f.grid.dim) * ball_energy(f, center, radius)


def normal_derivative_at_interface(f: CoupledField, side: Side) -> TraceField:
    """One-sided second-order ∂u/∂xₙ at Γ from the given side."""
    v = f.values(side)
    g = np.gradient(v, f.grid.spacing, axis=f.grid.dim - 1, edge_order=2)
    vals = g[..., -1, :] if side == Side.plus else g[..., 0, :]
    return TraceField(vals, Carrier.gamma, points=f.grid.gamma_coordinates(),
                      mask=f.grid.gamma_free().reshape(f.grid.gamma_shape))


def interpolate(f: CoupledField, side: Side, points: np.ndarray) -> np.ndarray:
    """Multilinear interpolation of one side at arbitrary points of that side."""
    grid = f.grid
    axes = grid.side_axes(side)
    pts = np.asarray(points, dtype=float).copy()
    for i, ax in enumerate(axes):
        pts[..., i] = np.clip(pts[..., i], ax[0], ax[-1])
    interp = RegularGridInterpolator(tuple(axes), f.values(side), method="linear",
                                     bounds_error=False, fill_value=None)
    flat = pts.reshape(-1, grid.dim)
    return interp(flat).reshape(pts.shape[:-1] + (f.components,))


def sphere_points(dim: int, center: np.ndarray, radius: float, side: Side,
                  samples: int = 64) -> np.ndarray:
    """Sample points of ∂B_r(x₀) on one side of Γ (xₙ ≤ 0 for plus)."""
    center = np.asarray(center, dtype=float)
    sign = -1.0 if side == Side.plus else 1.0
    if dim == 1:
        return (center + sign * radius)[None, :]
    if dim == 2:
        phi = np.linspace(0.0, np.pi, samples + 1)
        dirs = np.stack([-np.cos(phi) * sign, sign * np.sin(phi)], axis=-1)
        return center + radius * dirs
    polar = np.linspace(0.0, 0.5 * np.pi, samples // 2 + 1)
    azim = np.linspace(0.0, 2 * np.pi, 2 * samples, endpoint=False)
    P, A = np.meshgrid(polar, azim, indexing="ij")
    dirs = np.stack([np.sin(P) * np.cos(A), np.sin(P) * np.sin(A), sign * np.cos(P)], axis=-1)
    return center + radius * dirs


@dataclass
class BallRestriction:
    """Nodes strictly inside B_r(x₀) per side and interpolated traces on ∂B_r."""

    center: np.ndarray
    radius: float
    inside_plus: np.ndarray
    inside_minus: np.ndarray
    sphere_plus: TraceField
    sphere_minus: TraceField
    degenerate: bool

    def inside(self, side: Side) -> np.ndarray:
        return self.inside_plus if side == Side.plus else self.inside_minus


def ball_restriction(f: CoupledField, center: np.ndarray, radius: float,
                     samples: int = 64) -> BallRestriction:
    """Interior node sets of B_r(x₀) and multilinear sphere traces on both sides."""
    grid = f.grid
    grid.require_ball(center, radius)
    center = np.asarray(center, dtype=float)
    inside = {}
    spheres = {}
    for side in SIDES:
        d = np.linalg.norm(grid.coordinates(side) - center, axis=-1)
        inside[side] = d < radius - 1e-12
        pts = sphere_points(grid.dim, center, radius, side, samples)
        spheres[side] = TraceField(interpolate(f, side, pts), Carrier.sphere, points=pts)
    degenerate = radius < grid.spacing
    if degenerate:
        logger.debug(f"Ball radius {radius} below grid spacing {grid.spacing}")
    return BallRestriction(center, radius, inside[Side.plus], inside[Side.minus],
                           spheres[Side.plus], spheres[Side.minus], degenerate)
