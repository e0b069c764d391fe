"""Monotone quantities and regularity indicators.

Boundary monotonicity of the renormalized ball energy, the backward-heat-kernel quantity along
flows, the small-energy detector and the one-step energy decay ratio.
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import ndimage
from scipy.special import erf

from .errors import SplitmapError
from .grid import (
    SIDES,
    CoupledField,
    Side,
    SplitGrid,
    ball_weight,
    discrete_gradient,
    edge_energies,
    node_energy_density,
    renormalized_energy,
)
from .parabolic.flow import Trajectory

logger = logging.getLogger(__name__)

MASS_DEFECT_LIMIT = 1e-6


class InsufficientHistory(SplitmapError):
    """Trajectory does not reach back to t₀ − R²."""
    pass


def _increasing(radii: Sequence[float]) -> np.ndarray:
    radii = np.asarray(radii, dtype=float)
    if radii.ndim != 1 or radii.size == 0 or np.any(radii <= 0) or np.any(np.diff(radii) <= 0):
        raise ValueError(f"Radii must be positive and strictly increasing, got {radii.tolist()}")
    return radii


def _drops(values: np.ndarray) -> np.ndarray:
    """Θ(r_{i−1}) − Θ(r_i) clipped at zero, 0 for the first radius."""
    out = np.zeros_like(values)
    out[1:] = np.maximum(values[:-1] - values[1:], 0.0)
    return out


@dataclass
class MonotonicityCurve:
    center: np.ndarray
    radii: np.ndarray
    values: np.ndarray
    constant: float
    deficits: np.ndarray
    drops: np.ndarray

    @property
    def violation(self) -> float:
        return float(np.max(self.drops, initial=0.0))

    def rows(self) -> list[dict]:
        return [
            {"center": " ".join(f"{c:.6g}" for c in self.center), "r": float(r), "value": float(v),
             "deficit": float(d), "violation": float(w)}
            for r, v, d, w in zip(self.radii, self.values, self.deficits, self.drops)
        ]


def _radial_density(u: CoupledField, side: Side, center: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per node |x − x₀|^{2−n}|∂u/∂r|² and |x − x₀|."""
    grid = u.grid
    rel = grid.coordinates(side) - center
    dist = np.linalg.norm(rel, axis=-1)
    safe = np.where(dist > 0, dist, 1.0)
    radial = np.einsum("...i,...ik->...k", rel / safe[..., None], discrete_gradient(u, side))
    density = np.where(dist > 0, safe ** (2 - grid.dim) * np.sum(radial ** 2, axis=-1), 0.0)
    return density, dist


def static_monotonicity_curve(u: CoupledField, center: np.ndarray, radii: Sequence[float],
                              constant: float = 0.0) -> MonotonicityCurve:
    """Θ(r) = e^{Cr} r^{2−n} ∫_{B_r}|∇u|² with the radial deficit over each annulus."""
    grid = u.grid
    center = np.asarray(center, dtype=float)
    radii = _increasing(radii)
    for r in radii:
        grid.require_ball(center, r)
    values = np.array([math.exp(constant * r) * renormalized_energy(u, center, r) for r in radii])
    deficits = np.zeros_like(radii)
    parts = [(grid.mass[s].reshape(grid.side_shape(s)),) + _radial_density(u, s, center) for s in SIDES]
    for i in range(1, len(radii)):
        total = 0.0
        for mass, density, dist in parts:
            shell = ball_weight(dist, radii[i], grid.spacing) - ball_weight(dist, radii[i - 1], grid.spacing)
            total += float(np.sum(mass * density * shell))
        deficits[i] = total
    curve = MonotonicityCurve(center, radii, values, constant, deficits, _drops(values))
    logger.debug(f"Monotonicity at {center.tolist()}: {np.round(values, 6).tolist()}")
    return curve


@dataclass
class StruweQuantity:
    center: np.ndarray
    t0: float
    radii: np.ndarray
    values: np.ndarray
    slice_times: np.ndarray
    kernel_mass: np.ndarray
    mass_defect: np.ndarray
    derivative: np.ndarray
    rhs: np.ndarray
    drops: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.drops is None:
            self.drops = _drops(self.values)

    @property
    def violation(self) -> float:
        return float(np.max(self.drops, initial=0.0))

    def rows(self) -> list[dict]:
        return [
            {"R": float(R), "value": float(v), "slice_time": float(t), "kernel_mass": float(m),
             "mass_defect": float(d), "dE_dR": float(g), "rhs": float(q), "violation": float(w)}
            for R, v, t, m, d, g, q, w in zip(self.radii, self.values, self.slice_times, self.kernel_mass,
                                              self.mass_defect, self.derivative, self.rhs, self.drops)
        ]


def backward_heat_kernel(points: np.ndarray, center: np.ndarray, s: float) -> np.ndarray:
    """G = (4πs)^{−n/2} exp(−|x − x₀|²/4s) with s = t₀ − t."""
    n = points.shape[-1]
    d2 = np.sum((points - center) ** 2, axis=-1)
    return (4 * np.pi * s) ** (-n / 2) * np.exp(-d2 / (4 * s))


def kernel_mass_outside(grid: SplitGrid, center: np.ndarray, s: float) -> float:
    """Exact Gaussian mass outside the box."""
    inside = 1.0
    scale = 2.0 * math.sqrt(s)
    for (a, b), c in zip(grid.extents, center):
        inside *= 0.5 * (erf((b - c) / scale) - erf((a - c) / scale))
    return 1.0 - inside


def _weighted_energy(u: CoupledField, center: np.ndarray, s: float) -> float:
    total = 0.0
    for side in SIDES:
        for mid, e in edge_energies(u.grid, u.values(side), side):
            total += float(np.sum(e * backward_heat_kernel(mid, center, s)))
    return total


def _identity_rhs(u: CoupledField, ut: CoupledField, center: np.ndarray, R: float) -> float:
    """(1/R) ∫|(x − x₀)·∇u − 2R²∂ₜu|² G at s = R²."""
    grid = u.grid
    total = 0.0
    for side in SIDES:
        pts = grid.coordinates(side)
        rel = pts - center
        radial = np.einsum("...i,...ik->...k", rel, discrete_gradient(u, side))
        defect = radial - 2 * R ** 2 * ut.values(side)
        mass = grid.mass[side].reshape(grid.side_shape(side))
        total += float(np.sum(mass * np.sum(defect ** 2, axis=-1) * backward_heat_kernel(pts, center, R ** 2)))
    return total / R


def struwe_curve(trajectory: Trajectory, center: np.ndarray, t0: float,
                 radii: Sequence[float]) -> StruweQuantity:
    """E(R) = R² ∫|∇u|² G at the stored slice nearest t₀ − R²."""
    if not trajectory.fields:
        raise InsufficientHistory("Trajectory has no frames")
    center = np.asarray(center, dtype=float)
    radii = _increasing(radii)
    times = np.asarray(trajectory.times)
    available = t0 - trajectory.start
    if radii[-1] ** 2 > available * (1 + 1e-9):
        raise InsufficientHistory(f"R={radii[-1]} needs history back to t={t0 - radii[-1] ** 2:.4g}, "
                                  f"trajectory starts at {trajectory.start:.4g}",
                                  t0=t0, radius=float(radii[-1]), start=trajectory.start)
    grid = trajectory.fields[0].grid
    values = np.zeros_like(radii)
    slice_times = np.zeros_like(radii)
    kernel = np.zeros_like(radii)
    defect = np.zeros_like(radii)
    rhs = np.full_like(radii, np.nan)
    for i, R in enumerate(radii):
        s = R ** 2
        j = trajectory.nearest(t0 - s)
        u = trajectory.fields[j]
        slice_times[i] = times[j]
        values[i] = s * _weighted_energy(u, center, s)
        kernel[i] = sum(float(np.sum(grid.mass[side] * backward_heat_kernel(
            grid.coordinates(side).reshape(-1, grid.dim), center, s))) for side in SIDES)
        defect[i] = kernel_mass_outside(grid, center, s)
        ut = trajectory.derivatives[j]
        if ut is not None:
            rhs[i] = _identity_rhs(u, ut, center, R)
    derivative = np.gradient(values, radii) if len(radii) > 1 else np.zeros_like(values)
    capped = radii[defect > MASS_DEFECT_LIMIT]
    if capped.size:
        logger.warning(f"Gaussian mass outside the box exceeds {MASS_DEFECT_LIMIT} for R in {capped.tolist()}")
    return StruweQuantity(center, t0, radii, values, slice_times, kernel, defect, derivative, rhs)


def _full_box(grid: SplitGrid, plus: np.ndarray, minus: np.ndarray, combine) -> np.ndarray:
    """Glue the two side arrays into one box array; Γ entries merged with `combine`."""
    gamma = combine(plus[..., -1:], minus[..., :1])
    return np.concatenate([plus[..., :-1], gamma, minus[..., 1:]], axis=-1)


def _ball_kernel(dim: int, radius: float, spacing: float) -> np.ndarray:
    reach = int(math.ceil(radius / spacing)) + 1
    offsets = np.arange(-reach, reach + 1) * spacing
    mesh = np.meshgrid(*([offsets] * dim), indexing="ij")
    dist = np.sqrt(sum(m ** 2 for m in mesh))
    return ball_weight(dist, radius, spacing)


def _holder_field(values: np.ndarray, spacing: float, reach: int, exponent: float) -> np.ndarray:
    """Per node max over axial lags ≤ reach of |u(x) − u(y)| / |x − y|^α."""
    out = np.zeros(values.shape[:-1])
    for axis in range(values.ndim - 1):
        n = values.shape[axis]
        for lag in range(1, min(reach, n - 1) + 1):
            lo = np.take(values, np.arange(n - lag), axis=axis)
            hi = np.take(values, np.arange(lag, n), axis=axis)
            q = np.linalg.norm(hi - lo, axis=-1) / (lag * spacing) ** exponent
            pad = [(0, 0)] * out.ndim
            pad[axis] = (0, lag)
            out = np.maximum(out, np.pad(q, pad))
            pad[axis] = (lag, 0)
            out = np.maximum(out, np.pad(q, pad))
    return out


@dataclass
class RegularityMap:
    """Renormalized energies at one scale over the whole box (NaN where the ball leaves it)."""

    radius: float
    threshold: float
    coordinates: np.ndarray
    energies: np.ndarray
    holder: np.ndarray
    gamma_index: int

    @property
    def evaluated(self) -> np.ndarray:
        return np.isfinite(self.energies)

    @property
    def flagged(self) -> np.ndarray:
        return self.evaluated & (np.nan_to_num(self.energies, nan=0.0) > self.threshold)

    @property
    def gamma_energies(self) -> np.ndarray:
        return self.energies[..., self.gamma_index]

    @property
    def flagged_points(self) -> np.ndarray:
        return self.coordinates[self.flagged]

    def rows(self) -> list[dict]:
        mask = self.evaluated
        on_gamma = np.zeros(self.energies.shape, dtype=bool)
        on_gamma[..., self.gamma_index] = True
        rows = []
        for x, e, flag, g, q in zip(self.coordinates[mask], self.energies[mask], self.flagged[mask],
                                    on_gamma[mask], self.holder[mask]):
            row = {f"x{i}": float(c) for i, c in enumerate(x)}
            row.update({"r": self.radius, "energy": float(e), "flagged": int(flag), "gamma": int(g),
                        "holder": float(q)})
            rows.append(row)
        return rows


def singular_set_detect(u: CoupledField, radius: float, epsilon0: float = 0.5,
                        holder_exponent: float = 0.5) -> RegularityMap:
    """Flag nodes whose renormalized energy at scale r exceeds ε₀²."""
    grid = u.grid
    h = grid.spacing
    if radius < 4 * h:
        logger.warning(f"Detector radius {radius} below 4h; using {4 * h}")
        radius = 4 * h
    density = _full_box(grid, node_energy_density(u, Side.plus), node_energy_density(u, Side.minus),
                        lambda a, b: a + b)
    kernel = _ball_kernel(grid.dim, radius, h)
    energies = radius ** (2 - grid.dim) * ndimage.correlate(density, kernel, mode="constant", cval=0.0)

    coords = np.stack(np.meshgrid(*[grid.axis(i) for i in range(grid.dim)], indexing="ij"), axis=-1)
    lows = np.array([a for a, _ in grid.extents])
    highs = np.array([b for _, b in grid.extents])
    inside = np.all((coords - radius >= lows - 1e-12) & (coords + radius <= highs + 1e-12), axis=-1)
    energies = np.where(inside, energies, np.nan)

    reach = max(1, int(round(radius / h)))
    holder = _full_box(grid, _holder_field(u.plus, h, reach, holder_exponent)[..., None],
                       _holder_field(u.minus, h, reach, holder_exponent)[..., None], np.maximum)[..., 0]
    result = RegularityMap(radius, epsilon0 ** 2, coords, energies, holder, grid.gamma_index)
    result.holder = np.where(result.evaluated & ~result.flagged, holder, np.nan)
    logger.info(f"Detector at r={radius:.4g}: {int(np.count_nonzero(result.flagged))} flagged of "
                f"{int(np.count_nonzero(result.evaluated))} evaluated nodes")
    return result


def energy_decay_ratio(u: CoupledField, center: np.ndarray, radius: float, theta: float) -> float:
    """Θ̃(θr)/Θ̃(r) with Θ̃(ρ) = ρ^{2−n}∫_{B_ρ}|∇u|²; 0 when both vanish."""
    if not 0 < theta < 1:
        raise ValueError(f"theta must lie in (0, 1), got {theta}")
    outer = renormalized_energy(u, center, radius)
    inner = renormalized_energy(u, center, theta * radius)
    if outer <= 0:
        return 0.0
    return inner / outer

