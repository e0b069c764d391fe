"""Interface flux residual (∂u⁺/∂ν)ᵀ − (DΦ⁺)ᵗ(∂u⁻/∂ν)ᵀ."""

import logging

import numpy as np

from ..grid import Carrier, CoupledField, Side, TraceField, normal_derivative_at_interface
from .problem import AdmissibleProblem

logger = logging.getLogger(__name__)


def flux_residual(problem: AdmissibleProblem, u: CoupledField) -> TraceField:
    """Per free Γ node, in Tan(u⁺, M⁺); Σ-edge nodes carry zero."""
    grid = problem.grid
    free = grid.gamma_free().reshape(grid.gamma_shape)
    d_plus = normal_derivative_at_interface(u, Side.plus).values
    d_minus = normal_derivative_at_interface(u, Side.minus).values
    a = u.trace_plus[free]
    b = u.trace_minus[free]
    tangential_plus = problem.plus.inner.project_tangent(a, d_plus[free])
    tangential_minus = problem.minus.inner.project_tangent(b, d_minus[free])
    values = np.zeros_like(d_plus)
    values[free] = tangential_plus - problem.interface.adjoint_derivative(a, tangential_minus)
    result = TraceField(values, Carrier.gamma, points=grid.gamma_coordinates(), mask=free)
    logger.debug(f"Flux residual max {result.max_norm():.3e}")
    return result
