"""Semi-implicit projection stepper for the coupled heat flow and its energy ledger."""

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..errors import OutsideTubularNeighborhood, ProjectionFailure, SplitmapError
from ..elliptic.problem import AdmissibleProblem
from ..grid import SIDES, Carrier, CoupledField, Side, TraceField, discrete_energy, discrete_gradient, normal_derivative_at_interface
from ..transmission import ReducedSolver, ambient_mass, pack, reduced_space, unpack

logger = logging.getLogger(__name__)


class StabilityBoundExceeded(SplitmapError):
    """Time step is above the configured c·h² bound."""
    pass


@dataclass
class FlowState:
    time: float
    field: CoupledField
    previous: Optional[CoupledField] = None

    def time_derivative(self, dt: float) -> Optional[CoupledField]:
        if self.previous is None:
            return None
        return CoupledField(self.field.grid, (self.field.plus - self.previous.plus) / dt,
                            (self.field.minus - self.previous.minus) / dt)


@dataclass
class LedgerSample:
    time: float
    energy: float
    dissipation: float
    slack: float


@dataclass
class EnergyLedger:
    """Per-step energy and ∫|∂ₜu|² over each step; slack measured from the first sample."""

    constant: float = 0.0
    samples: list[LedgerSample] = field(default_factory=list)

    def add(self, time: float, energy: float, dissipation: float) -> None:
        if self.samples and time <= self.samples[-1].time:
            raise ValueError(f"Ledger times must increase: {time} after {self.samples[-1].time}")
        if not self.samples:
            slack = 0.0
        else:
            t0 = self.samples[0].time
            e0 = self.samples[0].energy
            times = np.array([s.time for s in self.samples[1:]] + [time])
            diss = np.array([s.dissipation for s in self.samples[1:]] + [dissipation])
            weighted = float(np.sum(np.exp(self.constant * (time - times)) * diss))
            slack = math.exp(self.constant * (time - t0)) * e0 - energy - 0.25 * weighted
        self.samples.append(LedgerSample(time, energy, dissipation, slack))

    def arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return (np.array([s.time for s in self.samples]),
                np.array([s.energy for s in self.samples]),
                np.array([s.dissipation for s in self.samples]))


@dataclass
class Trajectory:
    """Frames of a flow run with backward-difference time derivatives."""

    dt: float
    times: list[float] = field(default_factory=list)
    fields: list[CoupledField] = field(default_factory=list)
    derivatives: list[Optional[CoupledField]] = field(default_factory=list)

    def append(self, state: FlowState) -> None:
        self.times.append(state.time)
        self.fields.append(state.field)
        self.derivatives.append(state.time_derivative(self.dt))

    def nearest(self, t: float) -> int:
        return int(np.argmin(np.abs(np.asarray(self.times) - t)))

    @property
    def start(self) -> float:
        return self.times[0]

    @property
    def final(self) -> CoupledField:
        return self.fields[-1]


def curvature_source(problem: AdmissibleProblem, u: CoupledField, side: Side) -> np.ndarray:
    """A(u)(∇u, ∇u) = Σᵢ A(u)(P∂ᵢu, P∂ᵢu) per node."""
    manifold = problem.pair(side).ambient
    values = u.values(side)
    grad = discrete_gradient(u, side)
    P = manifold.tangent_projector(values)
    tangential = np.einsum("...ab,...ib->...ia", P, grad)
    out = np.zeros_like(values)
    for i in range(u.grid.dim):
        X = tangential[..., i, :]
        out += manifold.second_form(values, X, X)
    return out


def semi_implicit_step(problem: AdmissibleProblem, state: FlowState, dt: float,
                       stability_factor: float = 0.2) -> FlowState:
    """Backward-Euler heat step with explicit curvature source, then projection.

    The Γ unknown is the ambient plus trace; the minus trace is Φ⁺(a) + DΦ⁺(a)(v − a) at the
    current trace a, so the flux balance enters through the shared Γ block.
    """
    grid = problem.grid
    h = grid.spacing
    bound = stability_factor * h ** 2
    if dt > bound * (1 + 1e-12):
        raise StabilityBoundExceeded(f"dt={dt:.3e} exceeds {stability_factor}·h² = {bound:.3e}",
                                     dt=dt, bound=bound)
    u = state.field
    c = problem.components
    free = grid.gamma_free().reshape(grid.gamma_shape)
    a = u.trace_plus[free]
    J = problem.interface.jacobian(a)
    eye = np.broadcast_to(np.eye(c), J.shape)
    space = reduced_space(grid, c, gamma_plus_basis=eye, gamma_minus_basis=J)

    offset = {}
    for side in SIDES:
        arr = np.zeros_like(u.values(side))
        mask = grid.dirichlet_mask(side)
        arr[mask] = problem.boundary(side)[mask]
        offset[side] = arr
    offset[Side.minus][..., 0, :][free] = (problem.interface.forward(a)
                                          - np.einsum("...ij,...j->...i", J, a))
    s0 = pack(CoupledField(grid, offset[Side.plus], offset[Side.minus]))

    source = CoupledField(grid, curvature_source(problem, u, Side.plus),
                          curvature_source(problem, u, Side.minus))
    mass = ambient_mass(grid, c)
    load = mass * (pack(u) / dt + pack(source))
    solver = ReducedSolver(space, mass_shift=1.0 / dt)
    linear = unpack(grid, solver.solve(load, s0), c)
    try:
        new = problem.enforce_constraints(linear)
    except OutsideTubularNeighborhood as exc:
        raise ProjectionFailure(f"Heat step left the tubular neighborhood at t={state.time + dt:.4g}; "
                                f"reduce dt", **exc.context) from exc
    return FlowState(state.time + dt, new, u)


def step_dissipation(grid, before: CoupledField, after: CoupledField, dt: float) -> float:
    """∫ over one step of ∫|∂ₜu|², i.e. ‖Δu‖²_M / dt."""
    diff = pack(after) - pack(before)
    return float(np.sum(ambient_mass(grid, before.components) * diff ** 2) / dt)


def evolve(problem: AdmissibleProblem, u0: CoupledField, dt: float, t_end: float,
           stride: int = 10, stability_factor: float = 0.2,
           energy_constant: float = 0.0) -> tuple[Trajectory, EnergyLedger]:
    """Run the stepper from t = 0 to t_end, keeping every `stride`-th frame."""
    problem.require_admissible(u0)
    steps = max(1, int(round(t_end / dt)))
    state = FlowState(0.0, u0)
    trajectory = Trajectory(dt)
    trajectory.append(state)
    ledger = EnergyLedger(energy_constant)
    ledger.add(0.0, discrete_energy(u0), 0.0)
    for k in range(1, steps + 1):
        state = semi_implicit_step(problem, state, dt, stability_factor)
        state.time = k * dt
        energy = discrete_energy(state.field)
        ledger.add(state.time, energy, step_dissipation(problem.grid, state.previous, state.field, dt))
        if k % stride == 0 or k == steps:
            trajectory.append(state)
        if k % max(1, steps // 10) == 0:
            logger.debug(f"Flow t={state.time:.4g}: E={energy:.10g}")
    logger.info(f"Flow finished: {steps} steps to t={state.time:.4g}, E={ledger.samples[-1].energy:.10g}")
    return trajectory, ledger


@dataclass
class SlackReport:
    min_slack: float
    worst_pair: tuple[float, float]
    tolerance_rate: float
    identity_residual: float
    max_step_increase: float
    passed: bool

    def as_dict(self) -> dict:
        return {"min_slack": self.min_slack, "worst_s": self.worst_pair[0], "worst_t": self.worst_pair[1],
                "tolerance_rate": self.tolerance_rate, "identity_residual": self.identity_residual,
                "max_step_increase": self.max_step_increase, "passed": self.passed}


def energy_inequality_check(ledger: EnergyLedger, constant: Optional[float] = None,
                            tol_constant: float = 10.0, h: float = 0.0, dt: float = 0.0,
                            max_samples: int = 400) -> SlackReport:
    """Check e^{C(t−s)}E(s) − E(t) − ¼∫ₛᵗe^{C(t−τ)}∫|∂ₜu|² ≥ −C'(h²+dt)(t−s) for sampled s < t.

    Also reports the identity residual max |E(s) − E(t) − ∫ₛᵗ∫|∂ₜu|²| − C'(h²+dt)(t−s) (≤ 0 when
    the discrete dissipation identity holds) and the largest single-step energy increase.
    """
    C = ledger.constant if constant is None else constant
    t, E, D = ledger.arrays()
    rate = tol_constant * (h ** 2 + dt)
    W = np.cumsum(np.exp(-C * t) * D)
    Dc = np.cumsum(D)
    idx = np.unique(np.linspace(0, len(t) - 1, min(len(t), max_samples)).round().astype(int))
    ts, Es, Ws, Dcs = t[idx], E[idx], W[idx], Dc[idx]
    S, T = np.meshgrid(np.arange(len(idx)), np.arange(len(idx)), indexing="ij")
    upper = S < T
    span = ts[T] - ts[S]
    slack = (np.exp(C * span) * Es[S] - Es[T] - 0.25 * np.exp(C * ts[T]) * (Ws[T] - Ws[S]))
    margin = np.where(upper, slack + rate * span, np.inf)
    identity = np.where(upper, np.abs(Es[S] - Es[T] - (Dcs[T] - Dcs[S])) - rate * span, -np.inf)
    if np.any(upper):
        i, j = np.unravel_index(np.argmin(np.where(upper, slack, np.inf)), slack.shape)
        min_slack = float(slack[i, j])
        worst = (float(ts[i]), float(ts[j]))
        identity_residual = float(np.max(identity))
    else:
        min_slack, worst, identity_residual = 0.0, (float(t[0]), float(t[0])), 0.0
    increase = float(np.max(np.diff(E), initial=0.0))
    passed = bool(np.all(margin >= 0))
    if not passed:
        logger.warning(f"Energy inequality slack {min_slack:.3e} below tolerance on [{worst[0]:.4g}, {worst[1]:.4g}]")
    return SlackReport(min_slack, worst, rate, identity_residual, increase, passed)


def initial_flux_compatibility(problem: AdmissibleProblem, u0: CoupledField) -> TraceField:
    """(∂u₀⁻/∂ν)ᵀ − DΦ⁺(u₀⁺)(∂u₀⁺/∂ν)ᵀ per free Γ node."""
    grid = problem.grid
    free = grid.gamma_free().reshape(grid.gamma_shape)
    d_plus = normal_derivative_at_interface(u0, Side.plus).values
    d_minus = normal_derivative_at_interface(u0, Side.minus).values
    a = u0.trace_plus[free]
    b = u0.trace_minus[free]
    tp = problem.plus.inner.project_tangent(a, d_plus[free])
    tm = problem.minus.inner.project_tangent(b, d_minus[free])
    values = np.zeros_like(d_plus)
    values[free] = tm - problem.interface.derivative(a, tp)
    return TraceField(values, Carrier.gamma, points=grid.gamma_coordinates(), mask=free)
