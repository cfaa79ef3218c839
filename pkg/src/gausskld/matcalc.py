"""
Dense matrix-calculus helpers: vec/vech, the duplication matrix, Kronecker
products and the trace/vec rewrites used to read Jacobians and Hessians off
matrix differentials.

Matrices are plain 2-d ``numpy`` arrays. All vectorisation follows the
column-stacking convention, so ``vec(M)[k] == M[k % rows, k // rows]``.
"""

from functools import lru_cache

import numpy as np

from .exceptions import LengthMismatch, NonFinite, NotSquare, NotSymmetric, ShapeMismatch


def as_matrix(M, name="matrix"):
    M = np.asarray(M, dtype=float)
    if M.ndim != 2:
        raise ShapeMismatch(f"{name} must be 2-d, got shape {M.shape}")
    if M.size == 0:
        raise ShapeMismatch(f"{name} must be non-empty")
    if not np.all(np.isfinite(M)):
        raise NonFinite(f"{name} contains NaN or Inf")
    return M


def as_vector(v, name="vector"):
    v = np.asarray(v, dtype=float)
    if v.ndim == 2 and 1 in v.shape:
        v = v.reshape(-1)
    if v.ndim != 1:
        raise ShapeMismatch(f"{name} must be 1-d, got shape {v.shape}")
    if v.size == 0:
        raise ShapeMismatch(f"{name} must be non-empty")
    if not np.all(np.isfinite(v)):
        raise NonFinite(f"{name} contains NaN or Inf")
    return v


def default_sym_tol(M):
    return 1e-10 * max(1.0, float(np.linalg.norm(M, np.inf)))


def max_asymmetry(M):
    M = np.asarray(M, dtype=float)
    return float(np.max(np.abs(M - M.T))) if M.size else 0.0


def check_symmetric(M, sym_tol=None, name="matrix"):
    """Raise NotSquare / NotSymmetric unless ``M`` is symmetric within ``sym_tol``."""
    M = as_matrix(M, name)
    if M.shape[0] != M.shape[1]:
        raise NotSquare(f"{name} must be square, got shape {M.shape}")
    tol = default_sym_tol(M) if sym_tol is None else sym_tol
    asym = max_asymmetry(M)
    if asym > tol:
        raise NotSymmetric(asym, tol, name)
    return M


def vec(M):
    """Stack the columns of ``M`` into one vector."""
    M = as_matrix(M)
    return M.reshape(-1, order="F")


def unvec(v, rows, cols):
    v = as_vector(v)
    if v.size != rows * cols:
        raise LengthMismatch(f"vector of length {v.size} cannot be reshaped to {rows}x{cols}")
    return v.reshape((rows, cols), order="F")


def vech_length(n):
    return n * (n + 1) // 2


def vech_dim(length):
    """Inverse of :func:`vech_length`; raises if ``length`` is not triangular."""
    n = int(round((np.sqrt(8 * length + 1) - 1) / 2))
    if n < 1 or vech_length(n) != length:
        raise LengthMismatch(f"{length} is not a triangular number n(n+1)/2")
    return n


@lru_cache(maxsize=None)
def _lower_indices(n):
    # lower triangle in column order: (0,0),(1,0),...,(n-1,0),(1,1),...
    rows, cols = [], []
    for j in range(n):
        for i in range(j, n):
            rows.append(i)
            cols.append(j)
    rows, cols = np.array(rows, dtype=np.intp), np.array(cols, dtype=np.intp)
    rows.flags.writeable = False
    cols.flags.writeable = False
    return rows, cols


def vech(M, sym_tol=None):
    """
    Half-vectorise a symmetric matrix: the lower triangle, diagonal included,
    stacked column by column.

    Raises NotSquare for non-square input and NotSymmetric when
    ``max|M - M^T|`` exceeds ``sym_tol`` (default ``1e-10 * max(1, ||M||_inf)``).
    """
    M = check_symmetric(M, sym_tol)
    rows, cols = _lower_indices(M.shape[0])
    return M[rows, cols].copy()


def unvech(v, n=None):
    """Rebuild the symmetric matrix whose vech is ``v``."""
    v = as_vector(v)
    if n is None:
        n = vech_dim(v.size)
    elif v.size != vech_length(n):
        raise LengthMismatch(f"vech of an {n}x{n} matrix has length {vech_length(n)}, got {v.size}")
    rows, cols = _lower_indices(n)
    M = np.zeros((n, n))
    M[rows, cols] = v
    M[cols, rows] = v
    return M


@lru_cache(maxsize=None)
def _duplication(n):
    D = np.zeros((n * n, vech_length(n)))
    rows, cols = _lower_indices(n)
    for k, (i, j) in enumerate(zip(rows, cols)):
        D[i + j * n, k] = 1.0
        D[j + i * n, k] = 1.0
    D.flags.writeable = False
    return D


def duplication_matrix(n):
    """
    The 0/1 matrix ``D`` of shape ``(n**2, n(n+1)/2)`` with
    ``D @ vech(A) == vec(A)`` for every symmetric ``A``.

    The returned array is shared and read-only; copy it before mutating.
    """
    if int(n) != n or n < 1:
        raise ValueError(f"n must be a positive integer, got {n!r}")
    return _duplication(int(n))


def kron(A, B):
    """Kronecker product: block ``(i, j)`` of the result is ``A[i, j] * B``."""
    return np.kron(as_matrix(A, "A"), as_matrix(B, "B"))


def tr_prod(A, B):
    """``tr(A^T B)``, computed as the sum of the elementwise product."""
    A, B = as_matrix(A, "A"), as_matrix(B, "B")
    if A.shape != B.shape:
        raise ShapeMismatch(f"tr(A^T B) needs equal shapes, got {A.shape} and {B.shape}")
    return float(np.sum(A * B))


def hessian_from_trace_form(A, C):
    """
    Symmetrised Hessian identified from a second differential of the form
    ``tr(A dY^T C dX)``, namely ``(A^T kron C + A kron C^T) / 2``.
    """
    A, C = as_matrix(A, "A"), as_matrix(C, "C")
    if A.shape[0] != A.shape[1] or C.shape[0] != C.shape[1]:
        raise ShapeMismatch("A and C must be square")
    if A.shape != C.shape:
        raise ShapeMismatch(f"A and C must have the same size, got {A.shape} and {C.shape}")
    B = np.kron(A.T, C)
    return 0.5 * (B + B.T)


def prop1_lhs_rhs(A, B, c, d):
    """
    Both sides of ``tr(A B c d^T) = vec(A^T)^T (d kron B) c``.

    Returns ``(lhs, rhs)``; the left side is evaluated through the explicit
    n x n product so it shares nothing with the right side.
    """
    A, B = as_matrix(A, "A"), as_matrix(B, "B")
    c, d = as_vector(c, "c"), as_vector(d, "d")
    if A.shape[1] != B.shape[0] or B.shape[1] != c.size or A.shape[0] != d.size:
        raise ShapeMismatch(
            f"A{A.shape} B{B.shape} c({c.size}) d({d.size}) do not make A B c d^T square"
        )
    lhs = float(np.trace(A @ B @ np.outer(c, d)))
    rhs = float(vec(A.T) @ np.kron(d[:, None], B) @ c)
    return lhs, rhs


def vec_ABd_forms(A, B, d):
    """
    The three equal expressions for ``vec(A B d)``:
    ``A B d``, ``(d^T kron A) vec(B)`` and ``(A kron d^T) vec(B^T)``.
    """
    A, B, d = as_matrix(A, "A"), as_matrix(B, "B"), as_vector(d, "d")
    if A.shape[1] != B.shape[0] or B.shape[1] != d.size:
        raise ShapeMismatch(f"A{A.shape} B{B.shape} d({d.size}) are not conformable")
    direct = A @ (B @ d)
    via_B = np.kron(d[None, :], A) @ vec(B)
    via_Bt = np.kron(A, d[None, :]) @ vec(B.T)
    return direct, via_B, via_Bt
