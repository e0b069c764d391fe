"""Admissible initial fields and constrained energy descent."""

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..errors import CompatibilityError, OutsideTubularNeighborhood, ProjectionFailure, SplitmapError
from ..grid import SIDES, CoupledField, Side, box_stiffness, dirichlet_fill, discrete_energy, interpolate
from ..models import DescentMetric, InitializerKind, MinimizeOptions, StepRule
from ..transmission import ReducedSolver, ReducedSpace, ambient_operator, pack, reduced_space, unpack
from .problem import AdmissibleProblem

logger = logging.getLogger(__name__)


class StepFailure(SplitmapError):
    """Backtracking exhausted without an acceptable step."""
    pass


def _project(manifold, points, what: str) -> np.ndarray:
    try:
        return manifold.nearest_point(points)
    except OutsideTubularNeighborhood as exc:
        raise ProjectionFailure(f"{what} left the tubular neighborhood of {manifold.name}; "
                                f"supply a seed or use the homogeneous initializer",
                                **exc.context) from exc


def _midpoint_1d(problem: AdmissibleProblem) -> np.ndarray:
    """Ambient point between g(−1) and Φ⁻(g(1)) that projects cleanly onto M⁺.

    Nearly antipodal end values have a chord midpoint close to the medial axis; it is then
    pushed along the tangent of M⁺ at the pulled-back right end value.
    """
    inner = problem.plus.inner
    g_left = problem.boundary_plus[0]
    anchor = problem.interface.inverse(problem.minus.inner.nearest_point(problem.boundary_minus[-1]))
    mean = 0.5 * (g_left + anchor)
    if inner.distance(mean[None, :])[0] < 0.5 * inner.tubular_radius:
        return mean
    logger.debug("Interface end values nearly antipodal on M+; shifting the trace midpoint")
    return mean + 0.5 * inner.tubular_radius * inner.tangent_basis(anchor)[:, 0]


def _gamma_trace_harmonic(problem: AdmissibleProblem) -> np.ndarray:
    """Free Γ-node trace values in M⁺ (flat over free Γ nodes)."""
    grid = problem.grid
    free = grid.gamma_free()
    if grid.dim == 1:
        return _project(problem.plus.inner, _midpoint_1d(problem)[None, :], "Interface trace fill")
    K = box_stiffness(grid.gamma_shape, grid.spacing)
    values = problem.boundary_plus[..., -1, :].reshape(grid.n_gamma, -1)
    filled = dirichlet_fill(K, values, ~free)
    return _project(problem.plus.inner, filled[free], "Interface trace fill")


def _with_traces(problem: AdmissibleProblem, trace: np.ndarray) -> dict:
    """Side arrays holding g on Σ± and the matched traces on Γ."""
    grid = problem.grid
    free = grid.gamma_free().reshape(grid.gamma_shape)
    arrays = {}
    for side in SIDES:
        arr = np.zeros_like(problem.boundary(side))
        mask = grid.dirichlet_mask(side)
        arr[mask] = problem.boundary(side)[mask]
        plane = arr[..., -1, :] if side == Side.plus else arr[..., 0, :]
        plane[free] = trace if side == Side.plus else problem.interface.forward(trace)
        arrays[side] = arr
    return arrays


def _harmonic_initializer(problem: AdmissibleProblem) -> CoupledField:
    grid = problem.grid
    trace = _gamma_trace_harmonic(problem)
    arrays = _with_traces(problem, trace)
    for side in SIDES:
        fixed = (grid.dirichlet_mask(side) | grid.gamma_plane_mask(side)).ravel()
        flat = arrays[side].reshape(-1, problem.components)
        filled = dirichlet_fill(grid.stiffness[side], flat, fixed)
        interior = ~fixed
        filled[interior] = _project(problem.pair(side).ambient, filled[interior],
                                    f"Harmonic fill of the {side.value} side")
        arrays[side] = filled.reshape(arrays[side].shape)
    return CoupledField(grid, arrays[Side.plus], arrays[Side.minus])


def _gauge_points(problem: AdmissibleProblem, side: Side) -> np.ndarray:
    """Radial projection of every node onto ∂Ω from the interface centre (box gauge)."""
    grid = problem.grid
    x = grid.coordinates(side)
    lo = np.array([a for a, _ in grid.extents])
    hi = np.array([b for _, b in grid.extents])
    center = 0.5 * (lo + hi)
    center[-1] = 0.0
    d = x - center
    half = np.broadcast_to(0.5 * (hi - lo), d.shape).copy()
    half[..., -1] = np.where(d[..., -1] > 0, hi[-1], -lo[-1])
    gauge = np.max(np.abs(d) / half, axis=-1)
    at_center = gauge < 1e-12
    if np.any(at_center):
        fallback = np.zeros(grid.dim)
        if grid.dim == 1:
            fallback[0] = lo[0] if side == Side.plus else hi[0]
        else:
            fallback[0] = half[..., 0].flat[0]
        d[at_center] = fallback
        gauge = np.where(at_center, np.max(np.abs(d) / half, axis=-1), gauge)
    return center + d / gauge[..., None]


def _homogeneous_initializer(problem: AdmissibleProblem) -> CoupledField:
    """Degree-zero extension ḡ(x) = g(b(x)) with b the radial projection onto ∂Ω."""
    grid = problem.grid
    data = CoupledField(grid, problem.boundary_plus, problem.boundary_minus)
    free = grid.gamma_free().reshape(grid.gamma_shape)
    arrays = {}
    for side in SIDES:
        b = _gauge_points(problem, side)
        vals = interpolate(data, side, b)
        arrays[side] = _project(problem.pair(side).ambient, vals,
                                f"Degree-zero extension on the {side.value} side")
    b_gamma = _gauge_points(problem, Side.plus)[..., -1, :][free]
    trace = _project(problem.plus.inner, interpolate(data, Side.plus, b_gamma),
                     "Degree-zero interface trace")
    arrays[Side.plus][..., -1, :][free] = trace
    arrays[Side.minus][..., 0, :][free] = problem.interface.forward(trace)
    for side in SIDES:
        mask = grid.dirichlet_mask(side)
        arrays[side][mask] = problem.boundary(side)[mask]
    return CoupledField(grid, arrays[Side.plus], arrays[Side.minus])


def initialize_admissible(problem: AdmissibleProblem,
                          strategy: InitializerKind = InitializerKind.harmonic,
                          seed: Optional[CoupledField] = None) -> CoupledField:
    """An element of the admissible class built from the boundary data.

    `harmonic` fills Γ then each side harmonically and projects; `homogeneous` uses the
    degree-zero extension; a seed field is projected onto the constraints instead.
    """
    residual = problem.compatibility_residual()
    if residual > problem.constraint_tol:
        raise CompatibilityError(f"Boundary data violate the interface matching by {residual:.3e}",
                                 violations=len(problem.compatibility_violations()))
    if seed is not None:
        logger.info("Initializing from seed field")
        try:
            u = problem.enforce_constraints(seed)
        except OutsideTubularNeighborhood as exc:
            raise ProjectionFailure("Seed field is too far from the targets", **exc.context) from exc
    elif InitializerKind(strategy) == InitializerKind.homogeneous:
        u = _homogeneous_initializer(problem)
    else:
        u = _harmonic_initializer(problem)
    report = problem.admissibility(u)
    logger.info(f"Initial field built ({InitializerKind(strategy).value if seed is None else 'seed'}), "
                f"worst constraint residual {report.worst():.2e}")
    return u


def tangent_space(problem: AdmissibleProblem, u: CoupledField) -> ReducedSpace:
    """Admissible variations at u: tangent to N± inside, Γ unknowns in Tan(M⁺) slaved by DΦ⁺."""
    grid = problem.grid
    bases = {}
    for side in SIDES:
        nodes = grid.interior_mask(side).ravel()
        bases[side] = problem.pair(side).ambient.tangent_basis(u.flat(side)[nodes])
    free = grid.gamma_free().reshape(grid.gamma_shape)
    a = u.trace_plus[free]
    gp = problem.plus.inner.tangent_basis(a)
    gm = problem.interface.jacobian(a) @ gp
    return reduced_space(grid, problem.components, bases[Side.plus], bases[Side.minus], gp, gm)


def retract(problem: AdmissibleProblem, u: CoupledField, increment: np.ndarray) -> CoupledField:
    """Move u by an ambient increment and project back onto the constraints."""
    moved = unpack(problem.grid, pack(u) + increment, problem.components)
    return problem.enforce_constraints(moved)


def energy_gradient(problem: AdmissibleProblem, u: CoupledField) -> np.ndarray:
    """Ambient gradient K u of the discrete energy."""
    return ambient_operator(problem.grid, problem.components) @ pack(u)


def first_variation(problem: AdmissibleProblem, u: CoupledField, direction: np.ndarray,
                    space: Optional[ReducedSpace] = None) -> float:
    """d/dε E(u_ε) along the admissible variation S·direction."""
    space = tangent_space(problem, u) if space is None else space
    return float((space.matrix.T @ energy_gradient(problem, u)) @ direction)


@dataclass
class DescentRecord:
    iteration: int
    energy: float
    step: float
    stationarity: float


@dataclass
class DescentLedger:
    records: list[DescentRecord] = field(default_factory=list)
    converged: bool = False
    reason: str = ""

    def energies(self) -> np.ndarray:
        return np.array([r.energy for r in self.records])


def _stationarity(space: ReducedSpace, grad_red: np.ndarray) -> float:
    if grad_red.size == 0:
        return 0.0
    return float(np.max(np.abs(grad_red / space.lumped_mass())))


def minimize(problem: AdmissibleProblem, u0: CoupledField,
             opts: Optional[MinimizeOptions] = None) -> tuple[CoupledField, DescentLedger]:
    """Projected gradient descent in the admissible class with Armijo backtracking."""
    opts = opts or MinimizeOptions()
    problem.require_admissible(u0, opts.constraint_tol)
    u = u0
    energy = discrete_energy(u)
    ledger = DescentLedger([DescentRecord(0, energy, 0.0, float("nan"))])
    h = problem.grid.spacing
    tau0 = 1.0 if opts.metric == DescentMetric.h1 else 0.25 * h ** 2

    for it in range(1, opts.max_iterations + 1):
        space = tangent_space(problem, u)
        grad = space.matrix.T @ energy_gradient(problem, u)
        station = _stationarity(space, grad)
        ledger.records[-1].stationarity = station
        if station < opts.gradient_tol:
            ledger.converged, ledger.reason = True, "gradient"
            break
        if opts.metric == DescentMetric.h1:
            direction = ReducedSolver(space).solve_reduced(-grad)
        else:
            direction = -grad / space.lumped_mass()
        slope = float(grad @ direction)
        increment = space.expand(direction)

        tau = tau0
        accepted = None
        projection_failures = 0
        tries = 1 if opts.step_rule == StepRule.fixed else opts.max_backtracks
        for _ in range(tries):
            try:
                cand = retract(problem, u, tau * increment)
            except OutsideTubularNeighborhood:
                projection_failures += 1
                tau *= 0.5
                continue
            e_new = discrete_energy(cand)
            if opts.step_rule == StepRule.fixed and e_new <= energy:
                accepted = (cand, e_new)
                break
            if e_new <= energy + opts.armijo * tau * slope:
                accepted = (cand, e_new)
                break
            tau *= 0.5
        if accepted is None:
            if projection_failures == tries:
                raise ProjectionFailure("Every trial step left the tubular neighborhood",
                                        iteration=it)
            raise StepFailure(f"No acceptable step at iteration {it}", iteration=it,
                              energy=energy, slope=slope)

        u, e_new = accepted
        decrease = energy - e_new
        energy = e_new
        ledger.records.append(DescentRecord(it, energy, tau, float("nan")))
        logger.debug(f"Descent iteration {it}: E={energy:.12g}, step={tau:.3e}, stationarity={station:.3e}")
        if decrease <= opts.energy_tol * max(energy, 1e-300):
            ledger.converged, ledger.reason = True, "energy"
            break
    else:
        ledger.reason = "max_iterations"
        logger.warning(f"Descent stopped after {opts.max_iterations} iterations without convergence")

    logger.info(f"Descent finished after {len(ledger.records) - 1} steps ({ledger.reason}), E={energy:.10g}")
    return u, ledger
