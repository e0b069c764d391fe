"""Exactly solvable linear problems used as ground truth.

The coupled harmonic pair on the unit half balls (tangential parts matched by a constant matrix
P, normal parts vanishing on the flat interface), the scalar angle transmission problem for
circle targets, its Fourier solution in 1-D, and the blow-up comparison of a minimizer against
the linear pair.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .elliptic.problem import AdmissibleProblem
from .errors import SplitmapError
from .grid import SIDES, CoupledField, Side, SplitGrid, normal_derivative_at_interface, renormalized_energy
from .transmission import ReducedSolver, pack, reduced_space, unpack

logger = logging.getLogger(__name__)


class SingularCoupling(SplitmapError):
    """The coupling matrix P is numerically singular."""
    pass


class ScaleBelowGrid(SplitmapError):
    """Blow-up scale is smaller than four grid cells."""
    pass


@dataclass
class LinearTransmissionProblem:
    """Linear pair on the half balls B₁± of [−1, 1]ⁿ.

    Components are ordered (tangential k, normal m) in the frozen frames at a±. Data arrays have
    side shape + (k + m,); every node outside the open unit ball is a Dirichlet node.
    """

    grid: SplitGrid
    k: int
    m: int
    P: np.ndarray
    plus_data: np.ndarray
    minus_data: np.ndarray

    def __post_init__(self):
        self.P = np.atleast_2d(np.asarray(self.P, dtype=float)).reshape(self.k, self.k)
        for side, data in ((Side.plus, self.plus_data), (Side.minus, self.minus_data)):
            if data.shape != self.grid.side_shape(side) + (self.k + self.m,):
                raise ValueError(f"{side.value} data has shape {data.shape}")

    @classmethod
    def from_functions(cls, grid: SplitGrid, k: int, m: int, P: np.ndarray,
                       f_plus: Callable, f_minus: Callable) -> "LinearTransmissionProblem":
        return cls(grid, k, m, P, np.asarray(f_plus(grid.coordinates(Side.plus)), dtype=float),
                   np.asarray(f_minus(grid.coordinates(Side.minus)), dtype=float))

    @property
    def components(self) -> int:
        return self.k + self.m

    def data(self, side: Side) -> np.ndarray:
        return self.plus_data if side == Side.plus else self.minus_data

    def inside(self, side: Side) -> np.ndarray:
        return np.linalg.norm(self.grid.coordinates(side), axis=-1) < 1.0 - 1e-12

    def to_dict(self) -> dict:
        return {
            "grid": self.grid.to_dict(),
            "k": self.k,
            "m": self.m,
            "P": self.P.tolist(),
            "plus_data": self.plus_data.tolist(),
            "minus_data": self.minus_data.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "LinearTransmissionProblem":
        return cls(SplitGrid.from_dict(data["grid"]), data["k"], data["m"], np.array(data["P"]),
                   np.array(data["plus_data"], dtype=float), np.array(data["minus_data"], dtype=float))


@dataclass
class ReflectionReport:
    """Discrete checks of the even-reflection decoupling on the plus half ball."""

    difference_harmonic_residual: float
    difference_on_gamma: float
    neumann_minus_combination: float
    neumann_plus_combination: float
    vanishing_combination: str
    orthogonal_identity: Optional[float]

    def as_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class CoupledHarmonicSolution:
    plus: np.ndarray
    minus: np.ndarray
    harmonic_residual: float
    trace_residual: float
    normal_residual: float
    flux_residual: float
    reflection: Optional[ReflectionReport] = None

    def as_field(self, grid: SplitGrid) -> CoupledField:
        return CoupledField(grid, self.plus, self.minus)

    def to_dict(self) -> dict:
        return {
            "plus": self.plus.tolist(),
            "minus": self.minus.tolist(),
            "harmonic_residual": self.harmonic_residual,
            "trace_residual": self.trace_residual,
            "normal_residual": self.normal_residual,
            "flux_residual": self.flux_residual,
            "reflection": self.reflection.as_dict() if self.reflection else None,
        }


def _harmonic_residual(grid: SplitGrid, values: np.ndarray, side: Side, nodes: np.ndarray) -> float:
    if not np.any(nodes):
        return 0.0
    flat = values.reshape(-1, values.shape[-1])
    lap = grid.stiffness[side] @ flat / grid.mass[side][:, None]
    return float(np.max(np.abs(lap[nodes.ravel()])))


def _reflection_report(prob: LinearTransmissionProblem, plus: np.ndarray, minus: np.ndarray) -> ReflectionReport:
    grid = prob.grid
    k = prob.k
    P = prob.P
    free = prob.inside(Side.plus)[..., -1]
    reflected = minus[..., ::-1, :k]
    vt = plus[..., :k]
    diff = reflected - np.einsum("ij,...j->...i", P, vt)
    interior = prob.inside(Side.plus) & ~grid.gamma_plane_mask(Side.plus)
    harmonic = _harmonic_residual(grid, diff, Side.plus, interior)
    on_gamma = float(np.max(np.abs(diff[..., -1, :][free]), initial=0.0))
    back = np.einsum("ji,...j->...i", P, reflected)
    neumann = {}
    for sign, combo in (("-", vt - back), ("+", vt + back)):
        field_ = CoupledField(grid, combo, np.zeros(grid.side_shape(Side.minus) + (k,)))
        dn = normal_derivative_at_interface(field_, Side.plus).values
        neumann[sign] = float(np.max(np.abs(dn[free]), initial=0.0))
    orthogonal = None
    if k and np.allclose(P.T @ P, np.eye(k), atol=1e-12):
        a = np.linalg.norm(diff, axis=-1)
        b = np.linalg.norm(back - vt, axis=-1)
        orthogonal = float(np.max(np.abs(a - b)))
    vanishing = "+" if neumann["+"] <= neumann["-"] else "-"
    return ReflectionReport(harmonic, on_gamma, neumann["-"], neumann["+"], vanishing, orthogonal)


def solve_coupled_harmonic(prob: LinearTransmissionProblem, reflection: bool = True) -> CoupledHarmonicSolution:
    """Discrete harmonic pair with v₋ᵗ = P v₊ᵗ and vⁿ± = 0 on Γ₁, flux matched naturally."""
    grid = prob.grid
    k, m, c = prob.k, prob.m, prob.components
    if k:
        cond = np.linalg.cond(prob.P)
        if not np.isfinite(cond) or cond > 1e12:
            raise SingularCoupling(f"Coupling matrix has condition number {cond:.3e}", condition=float(cond))
    inside = {s: prob.inside(s) for s in SIDES}
    side_free = {s: (inside[s] & ~grid.gamma_plane_mask(s)).ravel() for s in SIDES}
    gamma_free = inside[Side.plus][..., -1].ravel()
    ng = int(np.count_nonzero(gamma_free))
    gp = np.zeros((ng, c, k))
    gm = np.zeros((ng, c, k))
    gp[:, :k, :] = np.eye(k)
    gm[:, :k, :] = prob.P
    space = reduced_space(grid, c, gamma_plus_basis=gp, gamma_minus_basis=gm,
                          plus_free=side_free[Side.plus], minus_free=side_free[Side.minus],
                          gamma_free=gamma_free)
    offsets = {}
    for s in SIDES:
        arr = prob.data(s).copy()
        free_nodes = side_free[s].reshape(grid.side_shape(s))
        arr[free_nodes] = 0.0
        plane = arr[..., -1, :] if s == Side.plus else arr[..., 0, :]
        plane[gamma_free.reshape(grid.gamma_shape)] = 0.0
        offsets[s] = arr
    s0 = pack(CoupledField(grid, offsets[Side.plus], offsets[Side.minus]))
    solution = unpack(grid, ReducedSolver(space).solve(None, s0), c)

    harmonic = max(_harmonic_residual(grid, solution.values(s), s, side_free[s]) for s in SIDES)
    g_free = gamma_free.reshape(grid.gamma_shape)
    tp = solution.trace_plus[g_free]
    tm = solution.trace_minus[g_free]
    trace_res = float(np.max(np.abs(tm[:, :k] - tp[:, :k] @ prob.P.T), initial=0.0))
    normal_res = float(max(np.max(np.abs(tp[:, k:]), initial=0.0), np.max(np.abs(tm[:, k:]), initial=0.0)))
    dp = normal_derivative_at_interface(solution, Side.plus).values[g_free][:, :k]
    dm = normal_derivative_at_interface(solution, Side.minus).values[g_free][:, :k]
    flux = float(np.max(np.abs(dp - dm @ prob.P), initial=0.0))
    report = None
    if reflection and k and np.allclose([a for a, _ in grid.extents], -1.0) and np.allclose([b for _, b in grid.extents], 1.0):
        report = _reflection_report(prob, solution.plus, solution.minus)
    logger.debug(f"Coupled harmonic solve: harmonic residual {harmonic:.2e}, flux residual {flux:.2e}")
    return CoupledHarmonicSolution(solution.plus, solution.minus, harmonic, trace_res, normal_res, flux, report)


def angle_transmission_solve(grid: SplitGrid, theta_plus: Callable, theta_minus: Callable,
                             beta: float) -> CoupledField:
    """Harmonic angles with θ⁻ = θ⁺ + β and ∂ₙθ⁺ = ∂ₙθ⁻ on Γ, Dirichlet data on Σ±."""
    space = reduced_space(grid, 1)
    offsets = {}
    for s, fn in ((Side.plus, theta_plus), (Side.minus, theta_minus)):
        arr = np.zeros(grid.side_shape(s) + (1,))
        values = np.asarray(fn(grid.coordinates(s)), dtype=float)
        if values.ndim == len(grid.side_shape(s)):
            values = values[..., None]
        mask = grid.dirichlet_mask(s)
        arr[mask] = values[mask]
        offsets[s] = arr
    free = grid.gamma_free().reshape(grid.gamma_shape)
    offsets[Side.minus][..., 0, :][free] = beta
    s0 = pack(CoupledField(grid, offsets[Side.plus], offsets[Side.minus]))
    return unpack(grid, ReducedSolver(space).solve(None, s0), 1)


def geodesic_slope(theta0: float, theta1: float, beta: float) -> float:
    """Common slope of the 1-D minimizer on [−1, 1]."""
    return 0.5 * (theta1 - theta0 - beta)


def heat_jump_fourier_1d(x: np.ndarray, t: float, theta0: float, theta1: float, beta: float,
                         amplitudes: Sequence[float] = ()) -> np.ndarray:
    """Angle solution of the heat equation on [−1, 1] with jump β at 0 and equal slopes.

    θ = steady + Σ_j a_j e^{−(jπ/2)² t} sin(jπ(x+1)/2), steady piecewise linear with slope
    (θ₁ − θ₀ − β)/2. Points at x = 0 get the plus value.
    """
    x = np.asarray(x, dtype=float)
    s = geodesic_slope(theta0, theta1, beta)
    theta = theta0 + s * (x + 1.0) + np.where(x > 0, beta, 0.0)
    for j, a in enumerate(amplitudes, start=1):
        theta = theta + a * np.exp(-(j * np.pi / 2) ** 2 * t) * np.sin(j * np.pi * (x + 1.0) / 2)
    return theta


@dataclass
class BlowupScale:
    radius: float
    energy: float
    closeness: float
    leakage: float
    trace_residual: float
    normal_residual: float
    flux_residual: float


@dataclass
class BlowupReport:
    center: np.ndarray
    base_plus: np.ndarray
    base_minus: np.ndarray
    P: np.ndarray
    scales: list[BlowupScale] = field(default_factory=list)
    decay_ratios: list[float] = field(default_factory=list)

    def as_rows(self) -> list[dict]:
        return [dict(s.__dict__) for s in self.scales]


def _window(u: CoupledField, x0: np.ndarray, cells: int) -> dict:
    grid = u.grid
    out = {}
    for side in SIDES:
        idx = []
        axes = grid.side_axes(side)
        for i, ax in enumerate(axes):
            center = int(np.argmin(np.abs(ax - x0[i])))
            if i < grid.dim - 1:
                lo, hi = center - cells, center + cells + 1
            else:
                lo, hi = (center - cells, center + 1) if side == Side.plus else (center, center + cells + 1)
            if lo < 0 or hi > len(ax):
                raise ScaleBelowGrid(f"Window of {cells} cells around {list(x0)} leaves the grid")
            idx.append(slice(lo, hi))
        out[side] = u.values(side)[tuple(idx)]
    return out


def blowup_consistency_check(problem: AdmissibleProblem, u: CoupledField, x0: np.ndarray,
                             scales: Sequence[float]) -> BlowupReport:
    """Rescale (u − a)/ε about x₀ and compare with the linear pair at each scale."""
    grid = problem.grid
    h = grid.spacing
    x0 = np.asarray(x0, dtype=float)
    free = grid.gamma_free().reshape(grid.gamma_shape)
    gamma_pts = grid.gamma_coordinates()[free]
    nearest = int(np.argmin(np.linalg.norm(np.atleast_2d(gamma_pts) - x0, axis=-1)))
    a_plus = problem.plus.inner.nearest_point(np.atleast_2d(u.trace_plus[free])[nearest])
    a_minus = problem.interface.forward(a_plus)
    T_plus = problem.plus.inner.tangent_basis(a_plus)
    N_plus = problem.plus.normal_basis(a_plus)
    T_minus = problem.minus.inner.tangent_basis(a_minus)
    N_minus = problem.minus.normal_basis(a_minus)
    J = problem.interface.jacobian(a_plus)
    P = T_minus.T @ J @ T_plus
    k = T_plus.shape[-1]
    m = N_plus.shape[-1]
    report = BlowupReport(x0, a_plus, a_minus, P)

    for r in sorted(scales, reverse=True):
        cells = int(round(r / h))
        if cells < 4:
            raise ScaleBelowGrid(f"Scale {r} is below 4h = {4 * h}", radius=r, spacing=h)
        radius = cells * h
        energy = renormalized_energy(u, x0, radius)
        eps = float(np.sqrt(energy))
        window = _window(u, x0, cells)
        local = SplitGrid(grid.dim, 1.0 / cells)
        if eps <= 0:
            report.scales.append(BlowupScale(radius, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0))
            continue
        v = {Side.plus: (window[Side.plus] - a_plus) / eps, Side.minus: (window[Side.minus] - a_minus) / eps}
        frames = {Side.plus: np.concatenate([T_plus, N_plus], axis=1),
                  Side.minus: np.concatenate([T_minus, N_minus], axis=1)}
        framed = {s: v[s] @ frames[s] for s in SIDES}
        leakage = max(float(np.max(np.linalg.norm(v[s] - framed[s] @ frames[s].T, axis=-1))) for s in SIDES)
        lin = solve_coupled_harmonic(LinearTransmissionProblem(local, k, m, P, framed[Side.plus],
                                                               framed[Side.minus]), reflection=False)
        closeness = max(float(np.max(np.abs(lin.plus - framed[Side.plus]))),
                        float(np.max(np.abs(lin.minus - framed[Side.minus]))))
        lf = local.gamma_free().reshape(local.gamma_shape)
        tp = framed[Side.plus][..., -1, :][lf]
        tm = framed[Side.minus][..., 0, :][lf]
        trace_res = float(np.max(np.abs(tm[:, :k] - tp[:, :k] @ P.T), initial=0.0))
        normal_res = float(max(np.max(np.abs(tp[:, k:]), initial=0.0), np.max(np.abs(tm[:, k:]), initial=0.0)))
        fld = CoupledField(local, framed[Side.plus], framed[Side.minus])
        dp = normal_derivative_at_interface(fld, Side.plus).values[lf][:, :k]
        dm = normal_derivative_at_interface(fld, Side.minus).values[lf][:, :k]
        flux = float(np.max(np.abs(dp - dm @ P), initial=0.0))
        report.scales.append(BlowupScale(radius, energy, closeness, leakage, trace_res, normal_res, flux))

    for larger, smaller in zip(report.scales, report.scales[1:]):
        report.decay_ratios.append(smaller.energy / larger.energy if larger.energy > 0 else 0.0)
    logger.info(f"Blow-up check at {list(x0)}: decay ratios {[round(q, 4) for q in report.decay_ratios]}")
    return report
