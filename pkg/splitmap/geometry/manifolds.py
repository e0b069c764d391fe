"""Embedded target manifolds: projection, tangent projector, second fundamental form.

All operations are vectorized over leading axes: a point array has shape (..., k) where k is
the ambient dimension, and every result keeps the leading shape. Sign convention for the
second fundamental form: the interior residual of a harmonic map is Δu + A(u)(∇u, ∇u), so for
the unit sphere A(p)(X, X) = |X|² p.
"""

import logging
from abc import ABC, abstractmethod
from typing import Callable, Optional

import numpy as np

from ..errors import OutsideTubularNeighborhood, SplitmapError

logger = logging.getLogger(__name__)


class NonTangentInput(SplitmapError):
    """A vector handed to the second fundamental form is not tangent."""
    pass


def _norm(v: np.ndarray) -> np.ndarray:
    return np.linalg.norm(v, axis=-1)


def _dot(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.sum(a * b, axis=-1)


class Manifold(ABC):
    """A closed embedded submanifold of R^k with a smooth nearest-point projection."""

    name: str = "manifold"

    def __init__(self, ambient_dim: int, dim: int, tubular_radius: float,
                 diameter: float, membership_factor: float = 1e-9):
        if not 0 < dim <= ambient_dim:
            raise ValueError(f"Invalid dimensions: dim={dim}, ambient_dim={ambient_dim}")
        if tubular_radius <= 0:
            raise ValueError("tubular_radius must be positive")
        self.ambient_dim = ambient_dim
        self.dim = dim
        self.tubular_radius = float(tubular_radius)
        self.diameter = float(diameter)
        self.membership_tol = membership_factor * self.diameter

    @abstractmethod
    def _project(self, p: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Return (nearest point, distance); distance is inf where undefined."""

    def nearest_point(self, p: np.ndarray) -> np.ndarray:
        """Nearest-point projection; raises outside the tubular neighborhood."""
        p = np.asarray(p, dtype=float)
        q, dist = self._project(p)
        bad = ~(dist < self.tubular_radius)
        if np.any(bad):
            worst = float(np.max(np.where(np.isfinite(dist), dist, np.inf)))
            raise OutsideTubularNeighborhood(
                f"{np.count_nonzero(bad)} point(s) outside the tubular neighborhood of {self.name}",
                max_distance=worst,
                tubular_radius=self.tubular_radius,
            )
        return q

    def distance(self, p: np.ndarray) -> np.ndarray:
        """Ambient distance to the manifold (inf where the projection is undefined)."""
        return self._project(np.asarray(p, dtype=float))[1]

    def contains(self, p: np.ndarray, tol: Optional[float] = None) -> np.ndarray:
        tol = self.membership_tol if tol is None else tol
        return self.distance(p) <= tol

    @abstractmethod
    def tangent_projector(self, p: np.ndarray) -> np.ndarray:
        """Orthogonal projector onto Tan(p), shape (..., k, k)."""

    def project_tangent(self, p: np.ndarray, v: np.ndarray) -> np.ndarray:
        return np.einsum("...ij,...j->...i", self.tangent_projector(p), v)

    def tangent_basis(self, p: np.ndarray) -> np.ndarray:
        """Orthonormal tangent frame, columns span T_pN, shape (..., dim, k)."""
        return _range_basis(self.tangent_projector(p), self.dim)

    @abstractmethod
    def second_form(self, p: np.ndarray, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
        """A(p)(X, Y) for tangent X, Y; normal-valued."""

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError(f"{self.name} has no sampler")


def _range_basis(projector: np.ndarray, rank: int) -> np.ndarray:
    """Orthonormal basis of the range of a symmetric projector (eigenvalues ~1)."""
    if rank == 0:
        return np.zeros(projector.shape[:-1] + (0,))
    sym = 0.5 * (projector + np.swapaxes(projector, -1, -2))
    _, vecs = np.linalg.eigh(sym)
    return vecs[..., -rank:]


def _exact_projector(approx: np.ndarray, rank: int) -> np.ndarray:
    basis = _range_basis(approx, rank)
    return np.einsum("...ia,...ja->...ij", basis, basis)


class Sphere(Manifold):
    """Round sphere of given radius spanning the first `span` ambient coordinates.

    span == ambient_dim gives S^{k-1} in R^k; span < ambient_dim gives an equator-type
    sphere sitting in the coordinate subspace (e.g. the equator of S^2 inside R^3).
    """

    def __init__(self, radius: float = 1.0, ambient_dim: int = 3, span: Optional[int] = None,
                 membership_factor: float = 1e-9):
        span = ambient_dim if span is None else span
        if not 2 <= span <= ambient_dim:
            raise ValueError(f"span must lie in [2, {ambient_dim}]")
        self.radius = float(radius)
        self.span = span
        super().__init__(ambient_dim, span - 1, self.radius, 2 * self.radius, membership_factor)
        self.name = "circle" if span == 2 else ("sphere" if span == ambient_dim else f"S{span - 1}")

    def _project(self, p):
        q = p[..., :self.span]
        rho = _norm(q)
        safe = np.where(rho > 0, rho, 1.0)
        out = np.zeros_like(p)
        out[..., :self.span] = self.radius * q / safe[..., None]
        rest = _norm(p[..., self.span:]) if self.span < self.ambient_dim else 0.0
        dist = np.sqrt((rho - self.radius) ** 2 + rest ** 2)
        return out, np.where(rho > 0, dist, np.inf)

    def _unit(self, p):
        q = np.zeros_like(p)
        q[..., :self.span] = p[..., :self.span]
        return q / _norm(q)[..., None]

    def tangent_projector(self, p):
        p = np.asarray(p, dtype=float)
        e = np.zeros(self.ambient_dim)
        e[:self.span] = 1.0
        n = self._unit(p)
        return np.diag(e) - n[..., :, None] * n[..., None, :]

    def second_form(self, p, X, Y):
        p = np.asarray(p, dtype=float)
        return (_dot(X, Y) / self.radius)[..., None] * self._unit(p)

    def sample(self, n, rng):
        g = np.zeros((n, self.ambient_dim))
        g[:, :self.span] = rng.standard_normal((n, self.span))
        return self.radius * g / _norm(g)[:, None]


def circle(radius: float = 1.0) -> Sphere:
    """S^1 in R^2."""
    return Sphere(radius, ambient_dim=2)


def sphere(radius: float = 1.0) -> Sphere:
    """S^2 in R^3."""
    return Sphere(radius, ambient_dim=3)


def equator(radius: float = 1.0) -> Sphere:
    """The circle {z = 0} of S^2, as a curve in R^3."""
    return Sphere(radius, ambient_dim=3, span=2)


class Torus(Manifold):
    """Torus of revolution about the z-axis with major radius R and tube radius r."""

    name = "torus"

    def __init__(self, major: float = 2.0, minor: float = 0.5, membership_factor: float = 1e-9):
        if not 0 < minor < major:
            raise ValueError("Torus requires 0 < minor < major")
        self.major = float(major)
        self.minor = float(minor)
        super().__init__(3, 2, self.minor, 2 * (self.major + self.minor), membership_factor)

    def _core(self, p):
        rho = np.hypot(p[..., 0], p[..., 1])
        safe = np.where(rho > 0, rho, 1.0)
        e = np.stack([p[..., 0] / safe, p[..., 1] / safe, np.zeros_like(rho)], axis=-1)
        return rho, e, self.major * e

    def _project(self, p):
        rho, _, c = self._core(p)
        d = p - c
        dn = _norm(d)
        safe = np.where(dn > 0, dn, 1.0)
        q = c + self.minor * d / safe[..., None]
        dist = np.abs(dn - self.minor)
        return q, np.where((rho > 0) & (dn > 0), dist, np.inf)

    def _normal(self, p):
        _, _, c = self._core(p)
        d = p - c
        return d / _norm(d)[..., None]

    def tangent_projector(self, p):
        n = self._normal(np.asarray(p, dtype=float))
        return np.eye(3) - n[..., :, None] * n[..., None, :]

    def second_form(self, p, X, Y):
        p = np.asarray(p, dtype=float)
        rho, e, _ = self._core(p)
        n = self._normal(p)
        Xh = X.copy()
        Xh[..., 2] = 0.0
        dc = (self.major / rho)[..., None] * (Xh - _dot(e, X)[..., None] * e)
        dn = (X - dc) / self.minor
        return _dot(dn, Y)[..., None] * n

    def sample(self, n, rng):
        a = rng.uniform(0, 2 * np.pi, n)
        b = rng.uniform(0, 2 * np.pi, n)
        return self.parametrize(a, b)

    def parametrize(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Point at toroidal angle a and poloidal angle b."""
        w = self.major + self.minor * np.cos(b)
        return np.stack([w * np.cos(a), w * np.sin(a), self.minor * np.sin(b)], axis=-1)


class GraphSurface(Manifold):
    """Surface {(x, y, f(x, y))} in R^3 given by f, its gradient and Hessian.

    The projection is a batched Newton solve for the foot point; the tubular radius is an
    input since it depends on the curvature of f.
    """

    name = "graph"

    def __init__(self, f: Callable, grad: Callable, hess: Callable, tubular_radius: float = 0.2,
                 diameter: float = 4.0, newton_steps: int = 30, membership_factor: float = 1e-9):
        self.f = f
        self.grad = grad
        self.hess = hess
        self.newton_steps = newton_steps
        super().__init__(3, 2, tubular_radius, diameter, membership_factor)

    def lift(self, xi: np.ndarray) -> np.ndarray:
        return np.concatenate([xi, self.f(xi)[..., None]], axis=-1)

    def _project(self, p):
        xi = p[..., :2].copy()
        for _ in range(self.newton_steps):
            r = self.lift(xi) - p
            g = self.grad(xi)
            grad = r[..., :2] + r[..., 2:3] * g
            H = (np.eye(2) + g[..., :, None] * g[..., None, :]
                 + r[..., 2, None, None] * self.hess(xi))
            step = np.linalg.solve(H, grad[..., None])[..., 0]
            xi = xi - step
            if np.max(np.abs(step), initial=0.0) < 1e-15:
                break
        q = self.lift(xi)
        return q, _norm(q - p)

    def _normal(self, p):
        g = self.grad(p[..., :2])
        n = np.concatenate([-g, np.ones(g.shape[:-1] + (1,))], axis=-1)
        return n / _norm(n)[..., None]

    def tangent_projector(self, p):
        n = self._normal(np.asarray(p, dtype=float))
        return np.eye(3) - n[..., :, None] * n[..., None, :]

    def second_form(self, p, X, Y):
        p = np.asarray(p, dtype=float)
        g = self.grad(p[..., :2])
        w = np.sqrt(1.0 + _dot(g, g))
        hxy = np.einsum("...i,...ij,...j->...", X[..., :2], self.hess(p[..., :2]), Y[..., :2])
        return -(hxy / w)[..., None] * self._normal(p)


class ProjectedManifold(Manifold):
    """Generic manifold defined by a user-supplied nearest-point projection.

    The tangent projector is the symmetric part of the finite-difference Jacobian of the
    projection, snapped to an exact rank-`dim` projector; the second fundamental form is
    minus the mixed second difference of the projection.
    """

    name = "projected"

    def __init__(self, projection: Callable[[np.ndarray], np.ndarray], ambient_dim: int,
                 dim: int, tubular_radius: float, diameter: float,
                 sampler: Optional[Callable[[int, np.random.Generator], np.ndarray]] = None,
                 fd_step: float = 1e-4, membership_factor: float = 1e-9):
        self.projection = projection
        self.sampler = sampler
        self.fd_step = fd_step
        super().__init__(ambient_dim, dim, tubular_radius, diameter, membership_factor)

    def _project(self, p):
        q = np.asarray(self.projection(p), dtype=float)
        return q, _norm(q - p)

    def tangent_projector(self, p):
        p = np.asarray(p, dtype=float)
        eps = self.fd_step
        cols = []
        for i in range(self.ambient_dim):
            e = np.zeros(self.ambient_dim)
            e[i] = eps
            cols.append((self.projection(p + e) - self.projection(p - e)) / (2 * eps))
        jac = np.stack(cols, axis=-1)
        return _exact_projector(jac, self.dim)

    def second_form(self, p, X, Y):
        p = np.asarray(p, dtype=float)
        nx = _norm(X)[..., None]
        ny = _norm(Y)[..., None]
        xs = np.where(nx > 0, X / np.where(nx > 0, nx, 1.0), 0.0)
        ys = np.where(ny > 0, Y / np.where(ny > 0, ny, 1.0), 0.0)
        eps = self.fd_step
        P = self.projection
        mixed = (P(p + eps * xs + eps * ys) - P(p + eps * xs - eps * ys)
                 - P(p - eps * xs + eps * ys) + P(p - eps * xs - eps * ys)) / (4 * eps ** 2)
        normal = np.eye(self.ambient_dim) - self.tangent_projector(p)
        return -np.einsum("...ij,...j->...i", normal, mixed) * nx * ny

    def sample(self, n, rng):
        if self.sampler is None:
            return super().sample(n, rng)
        return self.sampler(n, rng)


def project_to_manifold(p: np.ndarray, m: Manifold) -> np.ndarray:
    """Nearest point of m to p."""
    return m.nearest_point(p)


def second_form_eval(p: np.ndarray, X: np.ndarray, Y: np.ndarray, m: Manifold,
                     tol: float = 1e-8) -> np.ndarray:
    """A(p)(X, Y) after checking that X and Y are tangent at p."""
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    P = m.tangent_projector(p)
    for name, v in (("X", X), ("Y", Y)):
        resid = _norm(v - np.einsum("...ij,...j->...i", P, v))
        bound = tol * np.maximum(1.0, _norm(v))
        if np.any(resid > bound):
            raise NonTangentInput(f"{name} is not tangent to {m.name}",
                                  residual=float(np.max(resid)))
    return m.second_form(p, X, Y)


class SubmanifoldPair:
    """A target N together with its distinguished submanifold M carrying interface traces."""

    def __init__(self, ambient: Manifold, inner: Optional[Manifold] = None):
        inner = ambient if inner is None else inner
        if inner.ambient_dim != ambient.ambient_dim:
            raise ValueError("M and N must share the ambient space")
        if inner.dim > ambient.dim:
            raise ValueError("M cannot have larger dimension than N")
        self.ambient = ambient
        self.inner = inner

    @property
    def tangent_dim(self) -> int:
        """k: dimension of M."""
        return self.inner.dim

    @property
    def normal_dim(self) -> int:
        """m: codimension of M inside N."""
        return self.ambient.dim - self.inner.dim

    @property
    def is_full(self) -> bool:
        return self.inner is self.ambient

    def normal_in_N_projector(self, a: np.ndarray) -> np.ndarray:
        """Projector onto Nor(a, M) ∩ Tan(a, N)."""
        if self.is_full:
            a = np.asarray(a, dtype=float)
            return np.zeros(a.shape + (a.shape[-1],))
        return self.ambient.tangent_projector(a) - self.inner.tangent_projector(a)

    def normal_basis(self, a: np.ndarray) -> np.ndarray:
        """Orthonormal frame of Nor(a, M) ∩ Tan(a, N), shape (..., k, m)."""
        return _range_basis(self.normal_in_N_projector(a), self.normal_dim)

    def containment_residual(self, a: np.ndarray) -> float:
        """max |P_N P_M - P_M|; zero when Tan(a, M) ⊂ Tan(a, N)."""
        pn = self.ambient.tangent_projector(a)
        pm = self.inner.tangent_projector(a)
        return float(np.max(np.abs(pn @ pm - pm)))

    def validate(self, rng: np.random.Generator, samples: int = 32) -> None:
        """Check that sampled points of M lie on N."""
        pts = self.inner.sample(samples, rng)
        dist = self.ambient.distance(pts)
        if np.max(dist) > 1e3 * self.ambient.membership_tol:
            raise ValueError(f"{self.inner.name} is not contained in {self.ambient.name}")
        logger.debug(f"Submanifold pair {self.inner.name} in {self.ambient.name} validated")
