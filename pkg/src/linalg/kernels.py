"""Deterministic dense/sparse kernels.

SparseMatrix is a canonical ``scipy.sparse.csr_matrix``; DenseMatrix is a
C-contiguous float64 ``numpy.ndarray``. Every kernel checks its output is
finite.
"""

from typing import Callable, Optional, Tuple

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from src.core.errors import (
    ContractError,
    ConvergenceError,
    DegenerateBasisError,
    NonFiniteError,
    ShapeError,
    SingularMatrixError,
)
from src.core.logging import get_logger

logger = get_logger(__name__)

PRUNE_BELOW = 1e-15
SYMMETRY_TOL = 1e-10
PIVOT_TOL = 1e-12
RANK_TOL = 1e-12


def as_dense(values, name: str = "matrix") -> np.ndarray:
    arr = np.ascontiguousarray(values, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {arr.shape}")
    return ensure_finite(arr, name)


def ensure_finite(arr: np.ndarray, name: str = "matrix") -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"{name} contains NaN or Inf")
    return arr


def canonical_csr(m, shape: Optional[Tuple[int, int]] = None) -> sp.csr_matrix:
    """Canonical CSR: float64, summed duplicates, sorted columns, tiny entries pruned."""
    csr = sp.csr_matrix(m, shape=shape, dtype=np.float64)
    csr.sum_duplicates()
    csr.data[np.abs(csr.data) < PRUNE_BELOW] = 0.0
    csr.eliminate_zeros()
    csr.sort_indices()
    ensure_finite(csr.data, "sparse values")
    return csr


def identity(n: int) -> sp.csr_matrix:
    return canonical_csr(sp.identity(n, dtype=np.float64, format="csr"))


def max_asymmetry(m) -> float:
    if sp.issparse(m):
        diff = abs(m - m.T)
        return float(diff.max()) if diff.nnz else 0.0
    m = np.asarray(m)
    return float(np.max(np.abs(m - m.T))) if m.size else 0.0


def spmm(a: sp.csr_matrix, b: np.ndarray) -> np.ndarray:
    """CSR times dense; rows are accumulated in ascending column order."""
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"spmm: {a.shape} x {b.shape}")
    out = np.ascontiguousarray(a @ b, dtype=np.float64)
    return ensure_finite(out, "spmm output")


def _gram_schmidt(
    z: np.ndarray,
    rng: Optional[np.random.Generator] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    n, k = z.shape
    q = np.zeros((n, k))
    r = np.zeros((k, k))
    for j in range(k):
        v = z[:, j].copy()
        scale = max(np.linalg.norm(v), 1.0)
        # two passes keep orthogonality loss near machine precision
        for _ in range(2):
            coeffs = q[:, :j].T @ v
            v -= q[:, :j] @ coeffs
            r[:j, j] += coeffs
        norm = np.linalg.norm(v)
        if norm <= RANK_TOL * scale:
            if rng is None:
                raise DegenerateBasisError(
                    f"column {j} is linearly dependent (norm {norm:.3e})", column=j
                )
            v = rng.standard_normal(n)
            for _ in range(2):
                v -= q[:, :j] @ (q[:, :j].T @ v)
            norm_fresh = np.linalg.norm(v)
            q[:, j] = v / norm_fresh
            r[j, j] = 0.0
            continue
        q[:, j] = v / norm
        r[j, j] = norm
    return q, r


def qr_thin(z: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Thin QR with nonnegative diagonal in R."""
    z = as_dense(z, "qr input")
    if z.shape[0] < z.shape[1]:
        raise ShapeError(f"qr_thin needs n_rows >= n_cols, got {z.shape}")
    q, r = _gram_schmidt(z)
    return ensure_finite(q, "Q"), ensure_finite(r, "R")


def orthonormalize(z: np.ndarray, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    """qr_thin that restarts rank-deficient columns from fresh random directions."""
    return _gram_schmidt(as_dense(z, "basis"), rng=rng)


def solve_spd(
    m,
    b: np.ndarray,
    tol: float = 1e-10,
    max_iter: int = 1000,
) -> np.ndarray:
    """Column-by-column conjugate gradient for a symmetric positive definite m."""
    b = as_dense(b, "rhs")
    if m.shape[0] != m.shape[1] or m.shape[1] != b.shape[0]:
        raise ShapeError(f"solve_spd: {m.shape} with rhs {b.shape}")
    asym = max_asymmetry(m)
    if asym > SYMMETRY_TOL:
        raise ContractError(f"solve_spd requires a symmetric matrix (asymmetry {asym:.3e})")

    x = np.zeros_like(b)
    for j in range(b.shape[1]):
        col = b[:, j]
        norm_b = np.linalg.norm(col)
        if norm_b == 0.0:
            continue
        sol, info = spla.cg(m, col, rtol=tol, atol=0.0, maxiter=max_iter)
        residual = np.linalg.norm(m @ sol - col) / norm_b
        if info != 0 and residual > tol:
            raise ConvergenceError(
                f"CG did not converge on column {j}", residual=float(residual), iterations=max_iter
            )
        x[:, j] = sol
    return ensure_finite(x, "CG solution")


def dense_inverse(m: np.ndarray) -> np.ndarray:
    """Inverse through LU with partial pivoting; tiny pivots are rejected."""
    m = as_dense(m.toarray() if sp.issparse(m) else m, "matrix to invert")
    n = m.shape[0]
    if m.shape[1] != n:
        raise ShapeError(f"dense_inverse needs a square matrix, got {m.shape}")
    if n == 0:
        return np.zeros((0, 0))
    lu, piv = scipy.linalg.lu_factor(m, check_finite=False)
    pivots = np.abs(np.diag(lu))
    if pivots.min() <= PIVOT_TOL:
        raise SingularMatrixError(f"pivot {pivots.min():.3e} below {PIVOT_TOL:.0e}")
    inv = scipy.linalg.lu_solve((lu, piv), np.eye(n), check_finite=False)
    return ensure_finite(inv, "inverse")


def min_eigenvalue(m) -> float:
    """Smallest eigenvalue of a symmetric matrix."""
    n = m.shape[0]
    if n <= 512:
        dense = m.toarray() if sp.issparse(m) else np.asarray(m)
        return float(scipy.linalg.eigvalsh(dense, subset_by_index=[0, 0])[0])
    vals = spla.eigsh(m, k=1, which="SA", return_eigenvectors=False, tol=1e-8)
    return float(vals[0])


def spectral_radius(
    m_apply: Callable[[np.ndarray], np.ndarray],
    n: int,
    iterations: int = 500,
    seed: int = 0,
) -> float:
    """Power-iteration estimate of the spectral radius of a symmetric operator."""
    rng = np.random.default_rng(seed)
    v = rng.standard_normal((n, 1))
    v /= np.linalg.norm(v)
    estimate = 0.0
    for _ in range(iterations):
        w = m_apply(v)
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return 0.0
        estimate = float(norm)
        v = w / norm
    return estimate
