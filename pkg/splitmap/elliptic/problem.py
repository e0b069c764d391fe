"""Admissible problem: grid, targets, interface map and Dirichlet data."""

import logging
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from ..errors import NotAdmissible
from ..geometry import InterfaceMap, SubmanifoldPair
from ..grid import SIDES, Carrier, CoupledField, Side, SplitGrid, TraceField

logger = logging.getLogger(__name__)


@dataclass
class Violation:
    """Σ-edge node where Φ⁺(g⁺) ≠ g⁻."""

    node: tuple[int, ...]
    magnitude: float


@dataclass
class AdmissibilityReport:
    plus_distance: float
    minus_distance: float
    trace_plus_distance: float
    trace_minus_distance: float
    matching_residual: float
    boundary_residual: float

    def worst(self) -> float:
        return max(self.plus_distance, self.minus_distance, self.trace_plus_distance,
                   self.trace_minus_distance, self.matching_residual, self.boundary_residual)

    def as_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class AdmissibleProblem:
    """The class 𝒜: u± into N±, Γ traces in M± matched by Φ⁺, u = g on Σ±.

    boundary_plus / boundary_minus are side-shaped arrays; only Dirichlet nodes (Σ± and the
    Σ-edge) are read.
    """

    grid: SplitGrid
    plus: SubmanifoldPair
    minus: SubmanifoldPair
    interface: InterfaceMap
    boundary_plus: np.ndarray
    boundary_minus: np.ndarray
    constraint_tol: float = 1e-9

    def __post_init__(self):
        if self.plus.ambient.dim != self.minus.ambient.dim or self.plus.tangent_dim != self.minus.tangent_dim:
            raise ValueError("Targets must have equal dimensions on both sides")
        for side, g in ((Side.plus, self.boundary_plus), (Side.minus, self.boundary_minus)):
            if g.shape[:-1] != self.grid.side_shape(side):
                raise ValueError(f"Boundary data for {side.value} has shape {g.shape}")

    @classmethod
    def from_forms(cls, grid: SplitGrid, plus: SubmanifoldPair, minus: SubmanifoldPair,
                   interface: InterfaceMap, g_plus: Callable, g_minus: Callable,
                   constraint_tol: float = 1e-9) -> "AdmissibleProblem":
        """Sample closed-form boundary data on every node of each side."""
        return cls(grid, plus, minus, interface,
                   np.asarray(g_plus(grid.coordinates(Side.plus)), dtype=float),
                   np.asarray(g_minus(grid.coordinates(Side.minus)), dtype=float),
                   constraint_tol)

    def pair(self, side: Side) -> SubmanifoldPair:
        return self.plus if side == Side.plus else self.minus

    def boundary(self, side: Side) -> np.ndarray:
        return self.boundary_plus if side == Side.plus else self.boundary_minus

    @property
    def components(self) -> int:
        return self.boundary_plus.shape[-1]

    def boundary_trace(self, side: Side) -> TraceField:
        mask = self.grid.dirichlet_mask(side)
        carrier = Carrier.sigma_plus if side == Side.plus else Carrier.sigma_minus
        return TraceField(self.boundary(side)[mask], carrier,
                          points=self.grid.coordinates(side)[mask])

    def edge_traces(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(g⁺, g⁻, Σ-edge mask) over the Γ plane."""
        edge = ~self.grid.gamma_free().reshape(self.grid.gamma_shape)
        return self.boundary_plus[..., -1, :], self.boundary_minus[..., 0, :], edge

    def compatibility_violations(self, tol: Optional[float] = None) -> list[Violation]:
        """Σ-edge nodes with |Φ⁺(g⁺) − g⁻| > tol, with grid indices."""
        tol = self.constraint_tol if tol is None else tol
        g_p, g_m, edge = self.edge_traces()
        if not np.any(edge):
            return []
        resid = np.linalg.norm(self.interface.forward(g_p[edge]) - g_m[edge], axis=-1)
        where = np.argwhere(edge)
        j0 = self.grid.gamma_index
        return [Violation(tuple(int(i) for i in idx) + (j0,), float(r))
                for idx, r in zip(where, resid) if r > tol]

    def compatibility_residual(self) -> float:
        g_p, g_m, edge = self.edge_traces()
        if not np.any(edge):
            return 0.0
        return float(np.max(np.linalg.norm(self.interface.forward(g_p[edge]) - g_m[edge], axis=-1)))

    def boundary_on_targets(self) -> float:
        """max distance of Dirichlet data to N±."""
        worst = 0.0
        for side in SIDES:
            mask = self.grid.dirichlet_mask(side)
            worst = max(worst, float(np.max(self.pair(side).ambient.distance(self.boundary(side)[mask]))))
        return worst

    def admissibility(self, u: CoupledField) -> AdmissibilityReport:
        free = self.grid.gamma_free().reshape(self.grid.gamma_shape)
        bnd = 0.0
        for side in SIDES:
            mask = self.grid.dirichlet_mask(side)
            bnd = max(bnd, float(np.max(np.abs(u.values(side)[mask] - self.boundary(side)[mask]))))
        tp = u.trace_plus[free]
        tm = u.trace_minus[free]
        return AdmissibilityReport(
            plus_distance=float(np.max(self.plus.ambient.distance(u.plus))),
            minus_distance=float(np.max(self.minus.ambient.distance(u.minus))),
            trace_plus_distance=float(np.max(self.plus.inner.distance(tp), initial=0.0)),
            trace_minus_distance=float(np.max(self.minus.inner.distance(tm), initial=0.0)),
            matching_residual=float(np.max(
                np.linalg.norm(tm - self.interface.forward(tp), axis=-1), initial=0.0)),
            boundary_residual=bnd,
        )

    def require_admissible(self, u: CoupledField, tol: Optional[float] = None) -> AdmissibilityReport:
        tol = self.constraint_tol if tol is None else tol
        report = self.admissibility(u)
        if report.worst() > tol:
            raise NotAdmissible(f"Field violates the admissible class by {report.worst():.3e}",
                                **report.as_dict())
        return report

    def enforce_constraints(self, u: CoupledField) -> CoupledField:
        """Project interiors to N±, Γ to M⁺, slave the minus trace and reset Σ data."""
        plus = u.plus.copy()
        minus = u.minus.copy()
        plus[...] = self.plus.ambient.nearest_point(plus)
        minus[...] = self.minus.ambient.nearest_point(minus)
        free = self.grid.gamma_free().reshape(self.grid.gamma_shape)
        trace = self.plus.inner.nearest_point(u.trace_plus[free])
        tp = plus[..., -1, :]
        tm = minus[..., 0, :]
        tp[free] = trace
        tm[free] = self.interface.forward(trace)
        for side, arr in ((Side.plus, plus), (Side.minus, minus)):
            mask = self.grid.dirichlet_mask(side)
            arr[mask] = self.boundary(side)[mask]
        return CoupledField(self.grid, plus, minus)
