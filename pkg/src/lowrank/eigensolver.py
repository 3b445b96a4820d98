"""Subspace iteration for the leading eigenpairs of a symmetric PSD operator."""

from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np
import scipy.linalg

from src.core.config import settings
from src.core.errors import ContractError, ConvergenceError
from src.core.logging import get_logger
from src.linalg.kernels import ensure_finite, orthonormalize

logger = get_logger(__name__)

GAP_COLLAPSE_TOL = 1e-12


@dataclass(frozen=True)
class EigConfig:
    tol: float = settings.DEFAULT_EIG_TOL
    max_iter: int = settings.DEFAULT_EIG_MAX_ITER
    seed: int = 0
    oversample: int = 8
    strict: bool = True


@dataclass
class EigState:
    u: np.ndarray          # N x r, orthonormal columns
    r_diag: np.ndarray     # r x r, Ritz values on the diagonal (descending)
    iter: int
    residual: float
    converged: bool = True
    seed: int = 0
    history: List[float] = field(default_factory=list)
    next_eigenvalue: Optional[float] = None

    @property
    def rank(self) -> int:
        return self.u.shape[1]

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.diag(self.r_diag).copy()

    def metadata(self) -> dict:
        return {
            "rank": self.rank,
            "iterations": self.iter,
            "residual": self.residual,
            "converged": self.converged,
            "seed": self.seed,
            "next_eigenvalue": self.next_eigenvalue,
        }


def _rayleigh_ritz(q: np.ndarray, mq: np.ndarray):
    h = q.T @ mq
    h = 0.5 * (h + h.T)
    vals, vecs = scipy.linalg.eigh(h)
    order = np.argsort(vals)[::-1]
    vals, vecs = vals[order], vecs[:, order]
    return vals, q @ vecs, mq @ vecs


def top_r_eigs(
    m_apply: Callable[[np.ndarray], np.ndarray],
    n: int,
    r: int,
    tol: float = settings.DEFAULT_EIG_TOL,
    max_iter: int = settings.DEFAULT_EIG_MAX_ITER,
    seed: int = 0,
    oversample: int = 8,
    strict: bool = True,
) -> EigState:
    """r largest eigenpairs by Z <- M U, U <- QR(Z), with Rayleigh-Ritz refinement.

    Convergence: ||M U - U diag(lam)||_F / ||lam||_2 <= tol over the leading r
    Ritz pairs. Rank-deficient blocks are restarted from seeded random directions.
    """
    if not 1 <= r <= n:
        raise ContractError(f"top_r_eigs needs 1 <= r <= n, got r={r}, n={n}")
    block = min(r + max(oversample, 0), n)
    rng = np.random.default_rng(seed)

    q, _ = orthonormalize(rng.standard_normal((n, block)), rng)
    history: List[float] = []
    vals = np.zeros(block)
    residual = np.inf

    for it in range(1, max_iter + 1):
        z = ensure_finite(np.asarray(m_apply(q), dtype=np.float64), "subspace iterate")
        q, _ = orthonormalize(z, rng)
        mq = np.asarray(m_apply(q), dtype=np.float64)
        vals, q, mq = _rayleigh_ritz(q, mq)

        lam = vals[:r]
        scale = np.linalg.norm(lam)
        abs_res = np.linalg.norm(mq[:, :r] - q[:, :r] * lam)
        residual = float(abs_res / scale) if scale > 0 else float(abs_res)
        history.append(residual)
        if residual <= tol:
            break
    else:
        if strict:
            raise ConvergenceError(
                f"subspace iteration for r={r} did not converge", residual=residual, iterations=max_iter
            )
        logger.warning(
            f"Subspace iteration stopped at max_iter={max_iter} with residual {residual:.3e} (r={r})"
        )

    converged = residual <= tol
    next_eig = float(vals[r]) if block > r else None
    if next_eig is not None and abs(vals[r - 1] - next_eig) < GAP_COLLAPSE_TOL:
        logger.warning(
            f"Eigenvalue gap collapsed at r={r}: lambda_r={vals[r - 1]:.6g}, lambda_r+1={next_eig:.6g}"
        )

    logger.debug(f"top_r_eigs: r={r}, block={block}, iterations={len(history)}, residual={residual:.3e}")
    return EigState(
        u=np.ascontiguousarray(q[:, :r]),
        r_diag=np.diag(vals[:r]),
        iter=len(history),
        residual=residual,
        converged=converged,
        seed=seed,
        history=history,
        next_eigenvalue=next_eig,
    )
