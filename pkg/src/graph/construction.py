from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Tuple

import numpy as np
import scipy.sparse as sp

from src.core.errors import InputError
from src.core.logging import get_logger
from src.linalg.kernels import (
    as_dense,
    canonical_csr,
    identity,
    max_asymmetry,
    spectral_radius,
    spmm,
)

logger = get_logger(__name__)

ADJ_SYMMETRY_TOL = 1e-12
SIMILARITY_BLOCK = 1024
DEFAULT_K_SEM = 10


@dataclass(frozen=True)
class GraphOperators:
    """Every graph operator the propagation catalog draws on.

    `l_sem` is built on first access; only the tsGCN family reads it.
    """

    a_hat: sp.csr_matrix   # D^-1/2 (I + A) D^-1/2
    l_topo: sp.csr_matrix  # I - D^-1/2 A D^-1/2
    l_hat: sp.csr_matrix   # I - a_hat
    features: Optional[np.ndarray] = field(default=None, repr=False, compare=False)
    k_sem: int = DEFAULT_K_SEM

    @property
    def n(self) -> int:
        return self.a_hat.shape[0]

    @cached_property
    def l_sem(self) -> sp.csr_matrix:
        if self.features is None:
            raise InputError("no features were given for the semantic graph")
        l_sem = semantic_laplacian(self.features, self.k_sem)
        logger.info(f"Semantic Laplacian ready: N={self.n}, k_sem={self.k_sem}, nnz={l_sem.nnz}")
        return l_sem


def _check_adjacency(a: sp.csr_matrix) -> None:
    if a.shape[0] != a.shape[1]:
        raise InputError(f"adjacency must be square, got {a.shape}")
    if a.nnz and a.data.min() < 0:
        raise InputError(f"adjacency has a negative entry ({a.data.min():.3g})")
    asym = max_asymmetry(a)
    if asym > ADJ_SYMMETRY_TOL:
        raise InputError(f"adjacency is not symmetric (max asymmetry {asym:.3e})")
    if np.any(a.diagonal() != 0):
        raise InputError("adjacency must have a zero diagonal")


def _sym_normalize(m: sp.csr_matrix) -> sp.csr_matrix:
    degrees = np.asarray(m.sum(axis=1)).ravel()
    inv_sqrt = 1.0 / np.sqrt(degrees)
    d = sp.diags(inv_sqrt)
    return canonical_csr(d @ m @ d)


def normalize_adjacency(a, add_self_loops: bool) -> sp.csr_matrix:
    """Symmetric normalization; isolated nodes receive a unit self-loop."""
    a = canonical_csr(a)
    _check_adjacency(a)
    n = a.shape[0]
    if add_self_loops:
        m = a + identity(n)
    else:
        degrees = np.asarray(a.sum(axis=1)).ravel()
        isolated = (degrees == 0).astype(np.float64)
        m = a + sp.diags(isolated)
    return _sym_normalize(canonical_csr(m))


def topo_laplacian(a) -> sp.csr_matrix:
    a_tilde = normalize_adjacency(a, add_self_loops=False)
    return canonical_csr(identity(a_tilde.shape[0]) - a_tilde)


def _top_k_indices(row: np.ndarray, k: int) -> np.ndarray:
    # ties at the cut-off go to the lower node index
    kth = np.partition(row, -k)[-k]
    above = np.flatnonzero(row > kth)
    tied = np.flatnonzero(row == kth)[: k - above.size]
    return np.concatenate([above, tied])


def semantic_similarity(x, k_sem: int) -> sp.csr_matrix:
    """Symmetrized cosine kNN graph with negative similarities dropped."""
    x = as_dense(x, "features")
    n = x.shape[0]
    if k_sem < 1:
        raise InputError(f"k_sem must be >= 1, got {k_sem}")
    if n < k_sem + 1:
        raise InputError(f"semantic graph needs N >= k_sem + 1 (N={n}, k_sem={k_sem})")

    norms = np.linalg.norm(x, axis=1)
    zero_rows = norms == 0.0
    if zero_rows.any():
        logger.warning(
            f"{int(zero_rows.sum())} zero-norm feature rows are isolated in the semantic graph"
        )
    safe = np.where(zero_rows, 1.0, norms)
    unit = x / safe[:, None]

    rows, cols, vals = [], [], []
    for start in range(0, n, SIMILARITY_BLOCK):
        stop = min(start + SIMILARITY_BLOCK, n)
        sims = unit[start:stop] @ unit.T
        sims[np.arange(stop - start), np.arange(start, stop)] = -np.inf
        for offset, row in enumerate(sims):
            i = start + offset
            if zero_rows[i]:
                continue
            picked = _top_k_indices(row, k_sem)
            weights = np.clip(row[picked], 0.0, 1.0)
            keep = (weights > 0.0) & ~zero_rows[picked]
            rows.extend([i] * int(keep.sum()))
            cols.extend(picked[keep].tolist())
            vals.extend(weights[keep].tolist())

    s = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    return canonical_csr(s.maximum(s.T))


def semantic_laplacian(x, k_sem: int = DEFAULT_K_SEM) -> sp.csr_matrix:
    return topo_laplacian(semantic_similarity(x, k_sem))


def build_graph_operators(adjacency, features, k_sem: int = DEFAULT_K_SEM) -> GraphOperators:
    a_hat = normalize_adjacency(adjacency, add_self_loops=True)
    n = a_hat.shape[0]
    if k_sem < 1:
        raise InputError(f"k_sem must be >= 1, got {k_sem}")
    x = as_dense(features, "features")
    if x.shape[0] != n:
        raise InputError(f"features have {x.shape[0]} rows for a graph of {n} nodes")
    ops = GraphOperators(
        a_hat=a_hat,
        l_topo=topo_laplacian(adjacency),
        l_hat=canonical_csr(identity(n) - a_hat),
        features=x,
        k_sem=k_sem,
    )
    logger.info(f"Graph operators ready: N={n}, nnz(A_hat)={a_hat.nnz}, nnz(L_topo)={ops.l_topo.nnz}")
    return ops


def rayleigh_bounds(m, probes: int = 100, seed: int = 0) -> Tuple[float, float]:
    """Min / max Rayleigh quotient over random probes."""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((m.shape[0], probes))
    mx = spmm(m, x)
    q = np.sum(x * mx, axis=0) / np.sum(x * x, axis=0)
    return float(q.min()), float(q.max())


def adjacency_spectral_radius(a_norm: sp.csr_matrix) -> float:
    return spectral_radius(lambda v: spmm(a_norm, v), a_norm.shape[0])
