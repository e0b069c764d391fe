"""The interface diffeomorphism Φ⁺: M⁺ → M⁻, its derivative and adjoint."""

import logging
from abc import ABC, abstractmethod
from typing import Callable, Optional

import numpy as np

from .manifolds import Manifold

logger = logging.getLogger(__name__)


class InterfaceMap(ABC):
    """Φ⁺ with inverse Φ⁻ = (Φ⁺)⁻¹.

    `jacobian(a)` is the k×k matrix P⁻ DΦ̃ P⁺ of the ambient extension Φ̃ restricted to
    tangent spaces; the derivative is J v and the adjoint J^T w, so the adjoint identity holds
    to round-off.
    """

    is_isometry: bool = False

    def __init__(self, source: Manifold, target: Manifold, tubular_radius: Optional[float] = None):
        if source.dim != target.dim:
            raise ValueError("Φ⁺ needs M⁺ and M⁻ of equal dimension")
        self.source = source
        self.target = target
        self.tubular_radius = source.tubular_radius if tubular_radius is None else tubular_radius

    @abstractmethod
    def forward(self, a: np.ndarray) -> np.ndarray:
        """Φ⁺(a) for a on M⁺."""

    @abstractmethod
    def inverse(self, b: np.ndarray) -> np.ndarray:
        """Φ⁻(b) for b on M⁻."""

    def ambient_derivative(self, a: np.ndarray) -> np.ndarray:
        """Derivative of the extension forward∘Π_{M⁺}, shape (..., k, k)."""
        a = np.asarray(a, dtype=float)
        eps = 1e-6 * max(1.0, self.source.diameter)
        cols = []
        for i in range(a.shape[-1]):
            e = np.zeros(a.shape[-1])
            e[i] = eps
            cols.append((self.tubular_forward(a + e) - self.tubular_forward(a - e)) / (2 * eps))
        return np.stack(cols, axis=-1)

    def jacobian(self, a: np.ndarray) -> np.ndarray:
        """Tangential derivative matrix P⁻(Φ⁺(a)) DΦ̃(a) P⁺(a)."""
        a = np.asarray(a, dtype=float)
        p_src = self.source.tangent_projector(a)
        p_tgt = self.target.tangent_projector(self.forward(a))
        return p_tgt @ self.ambient_derivative(a) @ p_src

    def derivative(self, a: np.ndarray, v: np.ndarray) -> np.ndarray:
        return np.einsum("...ij,...j->...i", self.jacobian(a), v)

    def adjoint_derivative(self, a: np.ndarray, w: np.ndarray) -> np.ndarray:
        return np.einsum("...ji,...j->...i", self.jacobian(a), w)

    def tubular_forward(self, p: np.ndarray) -> np.ndarray:
        """Extension of Φ⁺ to the tubular neighborhood of M⁺."""
        return self.forward(self.source.nearest_point(p))

    def round_trip_residual(self, a: np.ndarray) -> float:
        a = np.asarray(a, dtype=float)
        return float(np.max(np.linalg.norm(self.inverse(self.forward(a)) - a, axis=-1)))


class IdentityMap(InterfaceMap):
    """Φ⁺ = id on M⁺ = M⁻."""

    is_isometry = True

    def __init__(self, manifold: Manifold):
        super().__init__(manifold, manifold)

    def forward(self, a):
        return np.asarray(a, dtype=float)

    def inverse(self, b):
        return np.asarray(b, dtype=float)

    def ambient_derivative(self, a):
        a = np.asarray(a, dtype=float)
        return np.broadcast_to(np.eye(a.shape[-1]), a.shape + (a.shape[-1],))


class RotationMap(InterfaceMap):
    """Rotation by angle β in the (i, j) coordinate plane; M⁻ is the rotated M⁺."""

    is_isometry = True

    def __init__(self, source: Manifold, target: Manifold, angle: float,
                 plane: tuple[int, int] = (0, 1)):
        super().__init__(source, target)
        self.angle = float(angle)
        k = source.ambient_dim
        Q = np.eye(k)
        i, j = plane
        c, s = np.cos(self.angle), np.sin(self.angle)
        Q[i, i], Q[i, j], Q[j, i], Q[j, j] = c, -s, s, c
        self.matrix = Q

    def forward(self, a):
        return np.asarray(a, dtype=float) @ self.matrix.T

    def inverse(self, b):
        return np.asarray(b, dtype=float) @ self.matrix

    def ambient_derivative(self, a):
        a = np.asarray(a, dtype=float)
        return np.broadcast_to(self.matrix, a.shape + (a.shape[-1],))


class ScalingMap(InterfaceMap):
    """Φ⁺(a) = c·a onto the scaled copy M⁻ = c·M⁺; DΦ⁺ = c·Id on tangent spaces."""

    def __init__(self, source: Manifold, target: Manifold, factor: float):
        if factor <= 0:
            raise ValueError("Scaling factor must be positive")
        super().__init__(source, target)
        self.factor = float(factor)
        self.is_isometry = abs(self.factor - 1.0) < 1e-14

    def forward(self, a):
        return self.factor * np.asarray(a, dtype=float)

    def inverse(self, b):
        return np.asarray(b, dtype=float) / self.factor

    def ambient_derivative(self, a):
        a = np.asarray(a, dtype=float)
        return np.broadcast_to(self.factor * np.eye(a.shape[-1]), a.shape + (a.shape[-1],))


class DiffeomorphismMap(InterfaceMap):
    """User-supplied Φ⁺/Φ⁻ pair; derivative by central differences of the extension."""

    def __init__(self, source: Manifold, target: Manifold,
                 forward: Callable[[np.ndarray], np.ndarray],
                 inverse: Callable[[np.ndarray], np.ndarray], is_isometry: bool = False):
        super().__init__(source, target)
        self._forward = forward
        self._inverse = inverse
        self.is_isometry = is_isometry

    def forward(self, a):
        return np.asarray(self._forward(np.asarray(a, dtype=float)), dtype=float)

    def inverse(self, b):
        return np.asarray(self._inverse(np.asarray(b, dtype=float)), dtype=float)


def interface_flux_transfer(a: np.ndarray, w: np.ndarray, interface: InterfaceMap) -> np.ndarray:
    """(DΦ⁺(a))^t applied to the M⁻-tangential part of w."""
    return interface.adjoint_derivative(a, w)
