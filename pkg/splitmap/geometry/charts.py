"""Local charts φ: B₁ᵏ × B₁ᵐ → N adapted to the slice M = {U² = 0}.

Coordinates are stored as one array U of shape (..., k + m): the first k entries are U¹
(along M), the last m entries are U² (normal to M inside N).
"""

import logging
from abc import ABC, abstractmethod
from typing import Callable, Optional

import numpy as np

from ..errors import SplitmapError
from .interface import InterfaceMap
from .manifolds import Manifold, Sphere, SubmanifoldPair

logger = logging.getLogger(__name__)


class SingularMetric(SplitmapError):
    """Chart metric is numerically singular at the requested coordinates."""
    pass


class Chart(ABC):
    """Coordinate chart with metric h = JᵀJ and Christoffel symbols of the induced metric."""

    m_slice_is_u2_zero: bool = True

    def __init__(self, manifold: Manifold, center: np.ndarray, radius: float,
                 tangent_dim: int, normal_dim: int, condition_bound: float = 1e10):
        self.manifold = manifold
        self.center = np.asarray(center, dtype=float)
        self.radius = float(radius)
        self.k = tangent_dim
        self.m = normal_dim
        self.condition_bound = condition_bound
        self.fd_step = 1e-5

    @property
    def dim(self) -> int:
        return self.k + self.m

    @abstractmethod
    def to_manifold(self, U: np.ndarray) -> np.ndarray:
        """φ(U), shape (..., ambient_dim)."""

    def slice_point(self, U1: np.ndarray) -> np.ndarray:
        """φ(U¹, 0), a point of M."""
        U1 = np.asarray(U1, dtype=float)
        U = np.concatenate([U1, np.zeros(U1.shape[:-1] + (self.m,))], axis=-1)
        return self.to_manifold(U)

    def jacobian(self, U: np.ndarray) -> np.ndarray:
        """∂φ/∂U, shape (..., ambient_dim, k + m)."""
        U = np.asarray(U, dtype=float)
        eps = self.fd_step
        cols = []
        for i in range(self.dim):
            e = np.zeros(self.dim)
            e[i] = eps
            cols.append((self.to_manifold(U + e) - self.to_manifold(U - e)) / (2 * eps))
        return np.stack(cols, axis=-1)

    def metric(self, U: np.ndarray) -> np.ndarray:
        J = self.jacobian(U)
        return np.einsum("...ai,...aj->...ij", J, J)

    def hessian(self, U: np.ndarray) -> np.ndarray:
        """∂ᵢ∂ⱼφ, shape (..., ambient_dim, d, d)."""
        U = np.asarray(U, dtype=float)
        eps = 1e-4
        d = self.dim
        base = self.to_manifold(U)
        H = np.zeros(base.shape + (d, d))
        for i in range(d):
            ei = np.zeros(d)
            ei[i] = eps
            H[..., i, i] = (self.to_manifold(U + ei) - 2 * base + self.to_manifold(U - ei)) / eps ** 2
            for j in range(i + 1, d):
                ej = np.zeros(d)
                ej[j] = eps
                mixed = (self.to_manifold(U + ei + ej) - self.to_manifold(U + ei - ej)
                         - self.to_manifold(U - ei + ej) + self.to_manifold(U - ei - ej)) / (4 * eps ** 2)
                H[..., i, j] = mixed
                H[..., j, i] = mixed
        return H

    def christoffel(self, U: np.ndarray) -> np.ndarray:
        """Γᵏᵢⱼ(U) = hᵏˡ⟨∂ᵢ∂ⱼφ, ∂ₗφ⟩, shape (..., d, d, d) indexed [k, i, j]."""
        J = self.jacobian(U)
        h = np.einsum("...ai,...aj->...ij", J, J)
        cond = np.linalg.cond(h)
        if np.any(~np.isfinite(cond)) or np.any(cond > self.condition_bound):
            raise SingularMetric("Chart metric is singular",
                                 condition=float(np.max(np.nan_to_num(cond, nan=np.inf))))
        lower = np.einsum("...aij,...al->...lij", self.hessian(U), J)
        return np.einsum("...kl,...lij->...kij", np.linalg.inv(h), lower)

    def from_manifold(self, p: np.ndarray, tol: float = 1e-13, max_iter: int = 60) -> np.ndarray:
        """Inverse of to_manifold by batched Gauss-Newton from U = 0."""
        p = np.asarray(p, dtype=float)
        U = np.zeros(p.shape[:-1] + (self.dim,))
        for _ in range(max_iter):
            r = self.to_manifold(U) - p
            J = self.jacobian(U)
            step = np.einsum("...ia,...a->...i", np.linalg.pinv(J), r)
            U = U - step
            if np.max(np.abs(step), initial=0.0) < tol:
                break
        return U

    def mixed_block_constant(self, U: np.ndarray) -> float:
        """Measured C in |h_ij| ≤ C|U²| over the mixed (U¹, U²) block at sample points."""
        if self.m == 0 or self.k == 0:
            return 0.0
        h = self.metric(U)
        mixed = np.max(np.abs(h[..., :self.k, self.k:]), axis=(-1, -2))
        u2 = np.linalg.norm(np.asarray(U)[..., self.k:], axis=-1)
        keep = u2 > 1e-8
        if not np.any(keep):
            return 0.0
        return float(np.max(mixed[keep] / u2[keep]))

    def in_domain(self, U: np.ndarray) -> bool:
        """True when U¹ ∈ B₁ᵏ and U² ∈ B₁ᵐ everywhere."""
        U = np.asarray(U)
        ok = np.linalg.norm(U[..., :self.k], axis=-1) < 1.0
        if self.m:
            ok &= np.linalg.norm(U[..., self.k:], axis=-1) < 1.0
        return bool(np.all(ok))


class AngleChart(Chart):
    """Flat arc-length chart on a circle: U ↦ R(cos, sin)(α₀ + ρU)."""

    def __init__(self, circle: Sphere, center: np.ndarray, radius: float,
                 orientation: float = 1.0):
        if circle.dim != 1:
            raise ValueError("AngleChart needs a circle")
        super().__init__(circle, center, radius, tangent_dim=1, normal_dim=0)
        self.base_angle = float(np.arctan2(self.center[1], self.center[0]))
        self.orientation = 1.0 if orientation >= 0 else -1.0

    def to_manifold(self, U):
        U = np.asarray(U, dtype=float)
        ang = self.base_angle + self.orientation * self.radius * U[..., 0]
        out = np.zeros(U.shape[:-1] + (self.manifold.ambient_dim,))
        out[..., 0] = self.manifold.radius * np.cos(ang)
        out[..., 1] = self.manifold.radius * np.sin(ang)
        return out

    def from_manifold(self, p, tol=1e-13, max_iter=60):
        p = np.asarray(p, dtype=float)
        ang = np.arctan2(p[..., 1], p[..., 0]) - self.base_angle
        ang = (ang + np.pi) % (2 * np.pi) - np.pi
        return (self.orientation * ang / self.radius)[..., None]

    def metric(self, U):
        U = np.asarray(U, dtype=float)
        val = (self.manifold.radius * self.radius) ** 2
        return np.full(U.shape[:-1] + (1, 1), val)

    def christoffel(self, U):
        U = np.asarray(U, dtype=float)
        return np.zeros(U.shape[:-1] + (1, 1, 1))


class SliceChart(Chart):
    """Chart of N built around the slice M.

    U¹ ↦ m(U¹) parametrizes M (by default Π_M(c + ρ T¹U¹), or a supplied slice map);
    U² moves along an orthonormalized normal-in-N frame F(m): φ(U) = Π_N(m + ρ F U²).
    """

    def __init__(self, pair: SubmanifoldPair, center: np.ndarray, radius: float,
                 slice_map: Optional[Callable[[np.ndarray], np.ndarray]] = None,
                 condition_bound: float = 1e10):
        super().__init__(pair.ambient, center, radius, pair.tangent_dim, pair.normal_dim,
                         condition_bound)
        self.pair = pair
        self._slice_map = slice_map
        self.tangent_frame = pair.inner.tangent_basis(self.center)
        self.normal_frame = pair.normal_basis(self.center)

    def slice_point(self, U1):
        U1 = np.asarray(U1, dtype=float)
        if self._slice_map is not None:
            return self._slice_map(U1)
        p = self.center + self.radius * np.einsum("ai,...i->...a", self.tangent_frame, U1)
        return self.pair.inner.nearest_point(p)

    def _frame(self, m: np.ndarray) -> np.ndarray:
        A = np.einsum("...ab,bj->...aj", self.pair.normal_in_N_projector(m), self.normal_frame)
        G = np.einsum("...ai,...aj->...ij", A, A)
        w, V = np.linalg.eigh(G)
        inv_sqrt = np.einsum("...ij,...j,...kj->...ik", V, 1.0 / np.sqrt(w), V)
        return A @ inv_sqrt

    def to_manifold(self, U):
        U = np.asarray(U, dtype=float)
        m = self.slice_point(U[..., :self.k])
        if self.m == 0:
            return m
        F = self._frame(m)
        p = m + self.radius * np.einsum("...aj,...j->...a", F, U[..., self.k:])
        return self.manifold.nearest_point(p)


class GraphChart(Chart):
    """Chart of N over its tangent plane at the center: φ(U) = Π_N(c + ρ T U)."""

    def __init__(self, manifold: Manifold, center: np.ndarray, radius: float,
                 condition_bound: float = 1e10):
        super().__init__(manifold, center, radius, manifold.dim, 0, condition_bound)
        self.frame = manifold.tangent_basis(self.center)

    def to_manifold(self, U):
        U = np.asarray(U, dtype=float)
        return self.manifold.nearest_point(
            self.center + self.radius * np.einsum("ai,...i->...a", self.frame, U))


def christoffel_eval(chart: Chart, U: np.ndarray) -> np.ndarray:
    """Christoffel symbols Γᵏᵢⱼ of the chart metric at U."""
    return chart.christoffel(U)


def chart_pair(plus: SubmanifoldPair, minus: SubmanifoldPair, interface: InterfaceMap,
               center: np.ndarray, radius: float) -> tuple[Chart, Chart]:
    """Matched charts at center ∈ M⁺ and Φ⁺(center) ∈ M⁻.

    The minus slice is parametrized as Φ⁺ of the plus slice, so V¹-continuity across Γ is the
    matching condition itself. Circles whose slice is the whole circle get flat angle charts
    when Φ⁺ maps them consistently.
    """
    center = np.asarray(center, dtype=float)
    if plus.is_full and minus.is_full and isinstance(plus.ambient, Sphere) and plus.ambient.dim == 1:
        chart_p = AngleChart(plus.ambient, center, radius)
        samples = np.linspace(-0.9, 0.9, 7)[:, None]
        for orientation in (1.0, -1.0):
            chart_m = AngleChart(minus.ambient, interface.forward(center), radius,
                                 orientation=orientation)
            mismatch = np.max(np.abs(chart_m.to_manifold(samples)
                                     - interface.forward(chart_p.to_manifold(samples))))
            if mismatch < 1e-10:
                return chart_p, chart_m
        logger.debug("Interface map is not a rigid motion of the circle; using slice charts")
    chart_p = SliceChart(plus, center, radius)
    chart_m = SliceChart(minus, interface.forward(center), radius,
                         slice_map=lambda U1: interface.forward(chart_p.slice_point(U1)))
    return chart_p, chart_m
