"""
Closed-form KL divergence KL(q || p) between q = N(m, S) and p = N(w, V),
together with its Jacobian and Hessian with respect to (m, w, S, V).

Derivatives are available in two bases. ``Basis.VEC`` treats S and V through
all n**2 entries of vec(S), vec(V); ``Basis.VECH`` uses only the n(n+1)/2
unique entries, obtained from the vec blocks through the duplication matrix
(right-multiplied for Jacobians, sandwiched ``D^T H D`` for Hessians).

Hessian blocks that involve S or V are only meaningful along symmetric
perturbations; they are not the entrywise second derivatives of the
expression extended to arbitrary square matrices.
"""

import enum
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import linalg

from .exceptions import DimensionMismatch, NotPositiveDefinite
from .matcalc import as_matrix, as_vector, check_symmetric, duplication_matrix, max_asymmetry, vec, vech_length


class Basis(str, enum.Enum):
    VEC = "vec"
    VECH = "vech"


class BlockId(str, enum.Enum):
    M = "m"
    W = "w"
    S = "S"
    V = "V"

    @property
    def is_matrix(self):
        return self in (BlockId.S, BlockId.V)


BLOCK_ORDER = (BlockId.M, BlockId.W, BlockId.S, BlockId.V)

# smallest admissible Cholesky pivot, relative to the infinity norm
PIVOT_RTOL = 1e-12


def spd_cholesky(A, name="matrix"):
    """
    Lower Cholesky factor of a symmetric positive definite matrix.

    Raises NotPositiveDefinite if the factorisation fails or any pivot
    ``L[i, i]**2`` is at or below ``1e-12 * ||A||_inf``.
    """
    try:
        L = linalg.cholesky(A, lower=True, check_finite=False)
    except linalg.LinAlgError as exc:
        raise NotPositiveDefinite(f"{name} is not positive definite") from exc
    pivots = np.diag(L) ** 2
    floor = PIVOT_RTOL * np.linalg.norm(A, np.inf)
    if not np.all(pivots > floor):
        raise NotPositiveDefinite(
            f"{name} is numerically singular: smallest pivot {pivots.min():.3e} <= {floor:.3e}"
        )
    return L


def _spd_inverse(L):
    n = L.shape[0]
    X = linalg.cho_solve((L, True), np.eye(n), check_finite=False)
    return 0.5 * (X + X.T)


@dataclass(frozen=True, eq=False)
class GaussianPair:
    """
    The two Gaussians q = N(m, S) and p = N(w, V).

    Construction validates dimensions, symmetry (within ``sym_tol``) and
    positive definiteness. S and V are stored exactly symmetrised.
    """

    m: np.ndarray
    w: np.ndarray
    S: np.ndarray
    V: np.ndarray
    sym_tol: float | None = field(default=None, repr=False)

    def __post_init__(self):
        m, w = as_vector(self.m, "m"), as_vector(self.w, "w")
        S, V = as_matrix(self.S, "S"), as_matrix(self.V, "V")
        n = m.size
        if w.size != n:
            raise DimensionMismatch(f"m has length {n} but w has length {w.size}")
        for name, X in (("S", S), ("V", V)):
            if X.shape != (n, n):
                raise DimensionMismatch(f"{name} must be {n}x{n}, got {X.shape}")
            check_symmetric(X, self.sym_tol, name)
        S, V = 0.5 * (S + S.T), 0.5 * (V + V.T)
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "S", S)
        object.__setattr__(self, "V", V)
        # fail early on non-SPD input
        _ = self.chol_S, self.chol_V

    @property
    def n(self):
        return self.m.size

    @property
    def a(self):
        return self.m - self.w

    @cached_property
    def chol_S(self):
        return spd_cholesky(self.S, "S")

    @cached_property
    def chol_V(self):
        return spd_cholesky(self.V, "V")

    @cached_property
    def S_inv(self):
        return _spd_inverse(self.chol_S)

    @cached_property
    def V_inv(self):
        return _spd_inverse(self.chol_V)

    @cached_property
    def Vinv_a(self):
        return linalg.cho_solve((self.chol_V, True), self.a, check_finite=False)

    @cached_property
    def Vinv_C_Vinv(self):
        """V^-1 (S + a a^T) V^-1, exactly symmetric."""
        b = self.Vinv_a
        X = self.V_inv @ self.S @ self.V_inv
        X = 0.5 * (X + X.T)
        return X + np.outer(b, b)

    def swapped(self):
        """The pair for KL(p || q)."""
        return GaussianPair(self.w, self.m, self.V, self.S)


def kld_value(p: GaussianPair) -> float:
    """
    KL(q || p) = 1/2 [log|V| - log|S| - n + tr(V^-1 S) + a^T V^-1 a],
    with a = m - w.

    Log-determinants and solves go through the Cholesky factors. Round-off
    below zero is clipped, so the result is always >= 0.
    """
    LS, LV = p.chol_S, p.chol_V
    logdet_V = 2.0 * np.sum(np.log(np.diag(LV)))
    logdet_S = 2.0 * np.sum(np.log(np.diag(LS)))
    # tr(V^-1 S) = ||L_V^-1 L_S||_F^2
    Z = linalg.solve_triangular(LV, LS, lower=True, check_finite=False)
    z = linalg.solve_triangular(LV, p.a, lower=True, check_finite=False)
    value = 0.5 * (logdet_V - logdet_S - p.n + np.sum(Z * Z) + z @ z)
    return max(float(value), 0.0)


def _to_vech_cols(block, n):
    return block @ duplication_matrix(n)


def jacobian_block(p: GaussianPair, var, basis=Basis.VEC) -> np.ndarray:
    """One block of the Jacobian row vector, returned as a 1-d array."""
    var, basis = BlockId(var), Basis(basis)
    Vi = p.V_inv
    if var is BlockId.M:
        return Vi @ p.a
    if var is BlockId.W:
        return -(Vi @ p.a)
    if var is BlockId.S:
        G = 0.5 * (Vi - p.S_inv)
    else:
        G = 0.5 * (Vi - p.Vinv_C_Vinv)
    row = vec(G)
    if basis is Basis.VECH:
        row = _to_vech_cols(row, p.n)
    return row


def block_size(var, n, basis):
    var, basis = BlockId(var), Basis(basis)
    if not var.is_matrix:
        return n
    return n * n if basis is Basis.VEC else vech_length(n)


@dataclass(frozen=True, eq=False)
class JacobianResult:
    basis: Basis
    block_m: np.ndarray
    block_w: np.ndarray
    block_S: np.ndarray
    block_V: np.ndarray

    @property
    def blocks(self):
        return {
            BlockId.M: self.block_m,
            BlockId.W: self.block_w,
            BlockId.S: self.block_S,
            BlockId.V: self.block_V,
        }

    @cached_property
    def assembled(self):
        return np.concatenate([self.block_m, self.block_w, self.block_S, self.block_V])


def assemble_jacobian(p: GaussianPair, basis=Basis.VECH) -> JacobianResult:
    basis = Basis(basis)
    return JacobianResult(basis, *(jacobian_block(p, b, basis) for b in BLOCK_ORDER))


def _vec_hessian_block(p, row, col):
    n = p.n
    Vi = p.V_inv
    b = p.Vinv_a  # V^-1 a; a^T V^-1 is the same numbers as a row
    key = (row, col)
    if key in ((BlockId.M, BlockId.M), (BlockId.W, BlockId.W)):
        return Vi.copy()
    if key in ((BlockId.M, BlockId.W), (BlockId.W, BlockId.M)):
        return -Vi
    if key == (BlockId.M, BlockId.V):
        return -np.kron(b[None, :], Vi)
    if key == (BlockId.W, BlockId.V):
        return np.kron(b[None, :], Vi)
    if key == (BlockId.V, BlockId.M):
        return -np.kron(b[:, None], Vi)
    if key == (BlockId.V, BlockId.W):
        return np.kron(b[:, None], Vi)
    if key == (BlockId.S, BlockId.S):
        return 0.5 * np.kron(p.S_inv, p.S_inv)
    if key in ((BlockId.S, BlockId.V), (BlockId.V, BlockId.S)):
        return -0.5 * np.kron(Vi, Vi)
    if key == (BlockId.V, BlockId.V):
        return -0.5 * np.kron(Vi, Vi - 2.0 * p.Vinv_C_Vinv)
    # remaining pairs couple a mean with S and vanish
    rows = n * n if row.is_matrix else n
    cols = n * n if col.is_matrix else n
    return np.zeros((rows, cols))


def hessian_block(p: GaussianPair, row, col, basis=Basis.VEC) -> np.ndarray:
    """
    Hessian block d^2 KLD / d(row)^T d(col).

    In the vech basis the vec block is multiplied by ``D^T`` on the left when
    ``row`` is S or V, and by ``D`` on the right when ``col`` is S or V.
    """
    row, col, basis = BlockId(row), BlockId(col), Basis(basis)
    H = _vec_hessian_block(p, row, col)
    if basis is Basis.VECH:
        D = duplication_matrix(p.n)
        if row.is_matrix:
            H = D.T @ H
        if col.is_matrix:
            H = H @ D
    return H


@dataclass(frozen=True, eq=False)
class HessianResult:
    basis: Basis
    blocks: dict

    @cached_property
    def assembled(self):
        return np.block([[self.blocks[r, c] for c in BLOCK_ORDER] for r in BLOCK_ORDER])

    @property
    def symmetry_residual(self):
        return max_asymmetry(self.assembled)


def assemble_hessian(p: GaussianPair, basis=Basis.VECH) -> HessianResult:
    basis = Basis(basis)
    blocks = {(r, c): hessian_block(p, r, c, basis) for r in BLOCK_ORDER for c in BLOCK_ORDER}
    return HessianResult(basis, blocks)


def mV_alternative_form(p: GaussianPair) -> np.ndarray:
    """
    The other Kronecker form of the (m, V) block, ``-V^-1 kron (a^T V^-1)``.

    It acts like ``hessian_block(p, "m", "V")`` on vec(W) for symmetric W
    only; on general W the two products differ.
    """
    return -np.kron(p.V_inv, p.Vinv_a[None, :])
