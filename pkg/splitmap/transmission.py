"""Reduced linear spaces for coupled two-sided solves.

Every linear problem in the package has the same structure: unknowns at free interior nodes
of each side plus one shared block of unknowns per free Γ node, each node with its own basis
matrix B (components × unknowns), and an affine offset carrying Dirichlet data and interface
jumps. The ambient field is u = S z + s₀ and the solve minimizes

    ½ uᵀ (α M + K) u − bᵀ u

over z, i.e. Sᵀ(αM + K)S z = Sᵀ(b − (αM + K)s₀). Sharing the Γ block between the plus rows
(basis B⁺) and minus rows (basis B⁻) makes the interface flux balance the natural condition.
"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import factorized

from .errors import SplitmapError
from .grid import SIDES, CoupledField, Side, SplitGrid

logger = logging.getLogger(__name__)


class LinearSolveFailure(SplitmapError):
    """The assembled reduced system could not be factorized."""
    pass


def _identity_basis(n: int, c: int) -> np.ndarray:
    return np.broadcast_to(np.eye(c), (n, c, c))


def _block(nodes: np.ndarray, basis: np.ndarray, c: int, row_offset: int, col_offset: int):
    nf, _, q = basis.shape
    rows = row_offset + nodes[:, None, None] * c + np.arange(c)[None, :, None]
    cols = col_offset + np.arange(nf)[:, None, None] * q + np.arange(q)[None, None, :]
    shape = (nf, c, q)
    return (np.broadcast_to(rows, shape).ravel(), np.broadcast_to(cols, shape).ravel(),
            np.asarray(basis, dtype=float).ravel())


@dataclass
class ReducedSpace:
    """Column space S of admissible ambient increments."""

    grid: SplitGrid
    components: int
    matrix: sparse.csr_matrix

    @property
    def n_plus(self) -> int:
        return self.components * self.grid.n_nodes(Side.plus)

    @property
    def n_unknowns(self) -> int:
        return self.matrix.shape[1]

    def expand(self, z: np.ndarray) -> np.ndarray:
        return self.matrix @ z

    def lumped_mass(self) -> np.ndarray:
        """diag(Sᵀ M S) for the trapezoidal mass."""
        m = ambient_mass(self.grid, self.components)
        return np.asarray(self.matrix.multiply(self.matrix).T @ m).ravel()


def reduced_space(grid: SplitGrid, components: int,
                  plus_basis: Optional[np.ndarray] = None,
                  minus_basis: Optional[np.ndarray] = None,
                  gamma_plus_basis: Optional[np.ndarray] = None,
                  gamma_minus_basis: Optional[np.ndarray] = None,
                  plus_free: Optional[np.ndarray] = None,
                  minus_free: Optional[np.ndarray] = None,
                  gamma_free: Optional[np.ndarray] = None) -> ReducedSpace:
    """Assemble S from per-node bases.

    Free masks are flat boolean arrays (side masks exclude the Γ plane; the Γ mask runs over
    Γ nodes in gamma_coordinates() order). Bases are (n_free, components, q) arrays; None
    means the identity.
    """
    c = components
    if plus_free is None:
        plus_free = grid.interior_mask(Side.plus).ravel()
    if minus_free is None:
        minus_free = grid.interior_mask(Side.minus).ravel()
    if gamma_free is None:
        gamma_free = grid.gamma_free()
    nodes_p = np.flatnonzero(plus_free)
    nodes_m = np.flatnonzero(minus_free)
    g_idx = np.flatnonzero(gamma_free)
    bp = _identity_basis(len(nodes_p), c) if plus_basis is None else plus_basis
    bm = _identity_basis(len(nodes_m), c) if minus_basis is None else minus_basis
    gp = _identity_basis(len(g_idx), c) if gamma_plus_basis is None else gamma_plus_basis
    gm = _identity_basis(len(g_idx), c) if gamma_minus_basis is None else gamma_minus_basis
    if gp.shape[2] != gm.shape[2]:
        raise ValueError("Γ bases must share the number of unknowns")

    n_plus = c * grid.n_nodes(Side.plus)
    col = 0
    pieces = []
    pieces.append(_block(nodes_p, bp, c, 0, col))
    col += len(nodes_p) * bp.shape[2]
    pieces.append(_block(nodes_m, bm, c, n_plus, col))
    col += len(nodes_m) * bm.shape[2]
    pieces.append(_block(grid.gamma_flat(Side.plus)[g_idx], gp, c, 0, col))
    pieces.append(_block(grid.gamma_flat(Side.minus)[g_idx], gm, c, n_plus, col))
    col += len(g_idx) * gp.shape[2]

    rows = np.concatenate([p[0] for p in pieces])
    cols = np.concatenate([p[1] for p in pieces])
    vals = np.concatenate([p[2] for p in pieces])
    n_rows = n_plus + c * grid.n_nodes(Side.minus)
    S = sparse.csr_matrix((vals, (rows, cols)), shape=(n_rows, col))
    return ReducedSpace(grid, c, S)


def ambient_operator(grid: SplitGrid, components: int, mass_shift: float = 0.0) -> sparse.csr_matrix:
    """blockdiag((αM + K)⊗I_c) over both sides."""
    blocks = []
    for side in SIDES:
        A = grid.stiffness[side] + mass_shift * sparse.diags(grid.mass[side])
        blocks.append(sparse.kron(A, sparse.identity(components), format="csr"))
    return sparse.block_diag(blocks, format="csr")


def ambient_mass(grid: SplitGrid, components: int) -> np.ndarray:
    return np.concatenate([np.repeat(grid.mass[s], components) for s in SIDES])


def pack(field: CoupledField) -> np.ndarray:
    """Ambient vector (plus nodes then minus nodes, component-minor)."""
    return np.concatenate([field.plus.ravel(), field.minus.ravel()])


def unpack(grid: SplitGrid, vec: np.ndarray, components: int) -> CoupledField:
    n_plus = components * grid.n_nodes(Side.plus)
    return CoupledField.from_flat(grid, vec[:n_plus].reshape(-1, components),
                                  vec[n_plus:].reshape(-1, components))


class ReducedSolver:
    """Factorized Sᵀ(αM + K)S for repeated solves with one reduced space."""

    def __init__(self, space: ReducedSpace, mass_shift: float = 0.0):
        self.space = space
        self.mass_shift = mass_shift
        self.operator = ambient_operator(space.grid, space.components, mass_shift)
        S = space.matrix
        self.reduced = (S.T @ self.operator @ S).tocsc()
        try:
            self._solve = factorized(self.reduced)
        except RuntimeError as exc:
            raise LinearSolveFailure(f"Reduced system is singular: {exc}",
                                     unknowns=space.n_unknowns) from exc

    def solve(self, load: Optional[np.ndarray] = None,
              offset: Optional[np.ndarray] = None) -> np.ndarray:
        """Minimizer u = S z + s₀ of ½uᵀ(αM+K)u − loadᵀu."""
        n = self.operator.shape[0]
        load = np.zeros(n) if load is None else load
        offset = np.zeros(n) if offset is None else offset
        rhs = self.space.matrix.T @ (load - self.operator @ offset)
        z = self._solve(rhs)
        if not np.all(np.isfinite(z)):
            raise LinearSolveFailure("Reduced solve produced non-finite values")
        return self.space.expand(z) + offset

    def solve_reduced(self, rhs: np.ndarray) -> np.ndarray:
        """Raw solve with the reduced matrix."""
        return self._solve(rhs)
