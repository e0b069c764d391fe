"""Picard iteration of the chart form of the heat flow.

In matched charts φ± the flow reads ∂ₜU − ΔU = Γ(U)(∇U, ∇U). The map U ↦ V = 𝕋(U) solves the
linear transmission system with the frozen source: V¹ shared across Γ (Neumann matched through
the common unknowns) and V² = 0 on Γ.
"""

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..elliptic.problem import AdmissibleProblem
from ..errors import SplitmapError
from ..geometry import Chart, chart_pair
from ..grid import SIDES, CoupledField, Side
from ..models import PicardConfig
from ..transmission import ReducedSolver, ambient_mass, reduced_space
from .flow import Trajectory

logger = logging.getLogger(__name__)


class ChartExit(SplitmapError):
    """An iterate left the coordinate ball of its chart."""
    pass


class NoContraction(SplitmapError):
    """Successive Picard differences do not shrink at this horizon."""
    pass


def _dyadic_lags(n: int) -> list[int]:
    lags = []
    lag = 1
    while lag < n:
        lags.append(lag)
        lag *= 2
    return lags


def _holder_quotient(values: np.ndarray, axis: int, step: float, exponent: float) -> float:
    n = values.shape[axis]
    best = 0.0
    for lag in _dyadic_lags(n):
        diff = np.take(values, np.arange(lag, n), axis=axis) - np.take(values, np.arange(n - lag), axis=axis)
        best = max(best, float(np.max(np.abs(diff))) / (lag * step) ** exponent)
    return best


def holder_proxy_norm(frames: dict, h: float, dt: float, alpha: float) -> float:
    """Discrete 𝒞^{1+α,(1+α)/2} surrogate of a two-sided trajectory.

    frames[side] has shape (steps + 1,) + side_shape + (d,). Sum over sides of: sup norm,
    sup of first differences, α-Hölder quotients of the gradient in space and
    (1+α)/2-Hölder quotients in time, over dyadic lags.
    """
    total = 0.0
    for side in SIDES:
        V = frames[side]
        dim = V.ndim - 2
        norm = float(np.max(np.abs(V), initial=0.0))
        for i in range(dim):
            grad = np.gradient(V, h, axis=1 + i, edge_order=2)
            norm += float(np.max(np.abs(grad)))
            for j in range(dim):
                norm += _holder_quotient(grad, 1 + j, h, alpha)
        if V.shape[0] > 1:
            norm += _holder_quotient(V, 0, dt, 0.5 * (1 + alpha))
        total += norm
    return total


@dataclass
class PicardResult:
    trajectory: Trajectory
    charts: tuple[Chart, Chart]
    differences: list[float] = field(default_factory=list)
    ratios: list[float] = field(default_factory=list)
    contraction_ratio: float = 0.0
    sweeps: int = 0
    converged: bool = False
    residual: float = 0.0
    coordinates: Optional[dict] = None
    recenters: int = 0


def _chart_source(chart: Chart, U: np.ndarray, h: float) -> np.ndarray:
    """Γ(U)(∇U, ∇U) over frames; U has shape (frames,) + side_shape + (d,)."""
    dim = U.ndim - 2
    grads = np.stack([np.gradient(U, h, axis=1 + i, edge_order=2) for i in range(dim)], axis=-2)
    gamma = chart.christoffel(U)
    return np.einsum("...kij,...ai,...aj->...k", gamma, grads, grads)


def picard_chart_solve(problem: AdmissibleProblem, u0: CoupledField, cfg: Optional[PicardConfig] = None,
                       dt: Optional[float] = None, charts: Optional[tuple[Chart, Chart]] = None,
                       stride: int = 1) -> PicardResult:
    """Iterate V = 𝕋(U) on [0, T] until successive iterates agree in the proxy norm."""
    cfg = cfg or PicardConfig()
    grid = problem.grid
    dt = cfg.dt if dt is None else dt
    if dt is None:
        dt = 0.2 * grid.spacing ** 2
    if not problem.interface.is_isometry:
        logger.warning("Interface map is not an isometry; Neumann matching of V¹ is only approximate")
    if charts is not None:
        return _solve_in_charts(problem, u0, cfg, dt, charts, stride)

    free = grid.gamma_free().reshape(grid.gamma_shape)
    if cfg.chart_center is not None:
        center = np.asarray(cfg.chart_center, dtype=float)
    else:
        center = np.mean(np.atleast_2d(u0.trace_plus[free]), axis=0)
    center = problem.plus.inner.nearest_point(center)
    for attempt in range(cfg.max_recenters + 1):
        charts = chart_pair(problem.plus, problem.minus, problem.interface, center, cfg.chart_radius)
        try:
            result = _solve_in_charts(problem, u0, cfg, dt, charts, stride)
        except ChartExit as exc:
            target = exc.context.get("recenter")
            if attempt == cfg.max_recenters or target is None:
                raise
            moved = problem.plus.inner.nearest_point(np.asarray(target, dtype=float))
            if np.allclose(moved, center, atol=1e-12):
                raise
            logger.warning(f"{exc.message}; re-centering the charts at {np.round(moved, 6).tolist()}")
            center = moved
            continue
        result.recenters = attempt
        return result


def _mean_trace(chart: Chart, U: np.ndarray, free: np.ndarray) -> np.ndarray:
    """Mean over frames and free Γ nodes of the plus trace, mapped back to the manifold."""
    trace = U[..., -1, :][..., free, :] if free.ndim else U[..., -1, :]
    points = chart.to_manifold(trace).reshape(-1, chart.manifold.ambient_dim)
    return np.mean(points, axis=0)


def _solve_in_charts(problem: AdmissibleProblem, u0: CoupledField, cfg: PicardConfig, dt: float,
                     charts: tuple[Chart, Chart], stride: int) -> PicardResult:
    grid = problem.grid
    h = grid.spacing
    steps = max(1, int(round(cfg.horizon / dt)))
    free = grid.gamma_free().reshape(grid.gamma_shape)
    chart = {Side.plus: charts[0], Side.minus: charts[1]}
    k = chart[Side.plus].k
    d = chart[Side.plus].dim

    U0 = {s: chart[s].from_manifold(u0.values(s)) for s in SIDES}
    for s in SIDES:
        if not chart[s].in_domain(U0[s]):
            raise ChartExit(f"Initial data do not fit in the {s.value} chart", side=s.value,
                            recenter=np.mean(np.atleast_2d(u0.trace_plus[free]), axis=0))

    basis = np.zeros((int(np.count_nonzero(free)), d, k))
    basis[:, :k, :] = np.eye(k)
    space = reduced_space(grid, d, gamma_plus_basis=basis, gamma_minus_basis=basis)
    solver = ReducedSolver(space, mass_shift=1.0 / dt)
    mass = ambient_mass(grid, d)
    offset = np.zeros(solver.operator.shape[0])
    n_plus = d * grid.n_nodes(Side.plus)
    for s, start in ((Side.plus, 0), (Side.minus, n_plus)):
        fixed = grid.dirichlet_mask(s)
        arr = np.zeros_like(U0[s])
        arr[fixed] = U0[s][fixed]
        offset[start:start + arr.size] = arr.ravel()

    def pack_frame(frames, idx):
        return np.concatenate([frames[Side.plus][idx].ravel(), frames[Side.minus][idx].ravel()])

    def apply_map(U):
        sources = {s: _chart_source(chart[s], U[s][1:], h) for s in SIDES}
        V = {s: np.empty_like(U[s]) for s in SIDES}
        for s in SIDES:
            V[s][0] = U0[s]
        for n in range(steps):
            load = mass * (pack_frame(V, n) / dt
                           + np.concatenate([sources[Side.plus][n].ravel(), sources[Side.minus][n].ravel()]))
            vec = solver.solve(load, offset)
            V[Side.plus][n + 1] = vec[:n_plus].reshape(U0[Side.plus].shape)
            V[Side.minus][n + 1] = vec[n_plus:].reshape(U0[Side.minus].shape)
        return V

    U = {s: np.broadcast_to(U0[s], (steps + 1,) + U0[s].shape).copy() for s in SIDES}
    result = PicardResult(Trajectory(dt), charts)
    previous_diff = None
    noise = 1e-11 * (1.0 + max(float(np.max(np.abs(U0[s]))) for s in SIDES))
    for sweep in range(1, cfg.max_sweeps + 1):
        V = apply_map(U)
        for s in SIDES:
            if not chart[s].in_domain(V[s]):
                raise ChartExit(f"Picard iterate left the {s.value} chart at sweep {sweep}",
                                side=s.value, sweep=sweep, horizon=cfg.horizon,
                                recenter=_mean_trace(chart[Side.plus], V[Side.plus], free))
        diff = holder_proxy_norm({s: V[s] - U[s] for s in SIDES}, h, dt, cfg.alpha)
        result.differences.append(diff)
        if previous_diff is not None and previous_diff > noise:
            result.ratios.append(diff / previous_diff)
        previous_diff = diff
        U = V
        result.sweeps = sweep
        logger.debug(f"Picard sweep {sweep}: proxy difference {diff:.3e}")
        if diff < cfg.tol:
            result.converged = True
            break
        if len(result.ratios) >= 2 and result.ratios[-1] >= 1.0 and result.ratios[-2] >= 1.0:
            raise NoContraction(f"Picard ratio {result.ratios[-1]:.3f} at T={cfg.horizon}; halve T",
                                ratios=result.ratios, horizon=cfg.horizon)

    result.contraction_ratio = max(result.ratios, default=0.0)
    if result.contraction_ratio >= 1.0:
        raise NoContraction(f"Measured contraction ratio {result.contraction_ratio:.3f} at T={cfg.horizon}",
                            ratios=result.ratios, horizon=cfg.horizon)
    if result.contraction_ratio > cfg.theta_target:
        logger.warning(f"Contraction ratio {result.contraction_ratio:.3f} above target {cfg.theta_target}")

    # residual of the nonlinear discrete system at the final iterate
    lumped = space.lumped_mass()
    sources = {s: _chart_source(chart[s], U[s][1:], h) for s in SIDES}
    worst = 0.0
    for n in range(steps):
        now = pack_frame(U, n + 1)
        load = mass * (pack_frame(U, n) / dt
                       + np.concatenate([sources[Side.plus][n].ravel(), sources[Side.minus][n].ravel()]))
        r = space.matrix.T @ (solver.operator @ now - load)
        worst = max(worst, float(np.max(np.abs(r / lumped), initial=0.0)))
    result.residual = worst
    result.coordinates = U

    for n in range(0, steps + 1):
        if n % stride and n != steps:
            continue
        fld = _to_field(problem, chart, U, n)
        result.trajectory.times.append(n * dt)
        result.trajectory.fields.append(fld)
        result.trajectory.derivatives.append(None)
    logger.info(f"Picard finished after {result.sweeps} sweeps, ratio {result.contraction_ratio:.3e}, "
                f"residual {result.residual:.3e}")
    return result


def _to_field(problem: AdmissibleProblem, chart: dict, U: dict, n: int) -> CoupledField:
    grid = problem.grid
    free = grid.gamma_free().reshape(grid.gamma_shape)
    plus = chart[Side.plus].to_manifold(U[Side.plus][n])
    minus = chart[Side.minus].to_manifold(U[Side.minus][n])
    trace = problem.plus.inner.nearest_point(plus[..., -1, :][free])
    plus[..., -1, :][free] = trace
    minus[..., 0, :][free] = problem.interface.forward(trace)
    for side, arr in ((Side.plus, plus), (Side.minus, minus)):
        mask = grid.dirichlet_mask(side)
        arr[mask] = problem.boundary(side)[mask]
    return CoupledField(grid, plus, minus)
