"""Propagation operators H -> T(H) + S(H0) for every catalog variant.

T is the homogeneous (linear) part, S the optional source map applied to a
bound H0. Every T and S built here is symmetric, so the backward pass reuses
them as their own transposes (the dense-inverse tsGCN path transposes
explicitly).
"""

from dataclasses import dataclass, replace
from typing import Any, Callable, Dict, Optional

import numpy as np
import scipy.sparse as sp

from src.core.errors import ParameterError, ShapeError, SpecError
from src.core.logging import get_logger
from src.framework.regularizers import (
    RegularizerSpec,
    Variant,
    hf_lambda_mu,
    lf_lambda_mu,
    resolve_rank,
    series_weights,
)
from src.graph.construction import GraphOperators
from src.linalg.kernels import as_dense, canonical_csr, identity, min_eigenvalue, solve_spd, spmm
from src.lowrank.eigensolver import EigConfig
from src.lowrank.woodbury import build_tsgcn_operator

logger = get_logger(__name__)

SPD_MARGIN = 1e-12

DenseMap = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class PropagationOperator:
    n: int
    homogeneous: Optional[DenseMap]
    descriptor: Dict[str, Any]
    source: Optional[DenseMap] = None
    h0: Optional[np.ndarray] = None
    transpose: Optional[DenseMap] = None

    @property
    def has_source(self) -> bool:
        return self.source is not None

    @property
    def source_bound(self) -> bool:
        return self.h0 is not None

    def bind(self, h0: np.ndarray) -> "PropagationOperator":
        if self.source is None:
            raise SpecError(f"{self.descriptor['variant']} has no source term to bind")
        h0 = as_dense(h0, "h0")
        if h0.shape[0] != self.n:
            raise ShapeError(f"h0 has {h0.shape[0]} rows, operator is {self.n}x{self.n}")
        descriptor = dict(self.descriptor, source_bound=True)
        return replace(self, h0=h0, descriptor=descriptor)

    def apply_homogeneous(self, h: np.ndarray) -> np.ndarray:
        h = as_dense(h, "propagation input")
        if h.shape[0] != self.n:
            raise ShapeError(f"input has {h.shape[0]} rows, operator is {self.n}x{self.n}")
        if self.homogeneous is None:
            return np.zeros_like(h)
        return self.homogeneous(h)

    def apply_transpose(self, g: np.ndarray) -> np.ndarray:
        if self.homogeneous is None:
            return np.zeros_like(as_dense(g, "gradient"))
        if self.transpose is not None:
            return self.transpose(as_dense(g, "gradient"))
        return self.apply_homogeneous(g)

    def apply_source(self, h0: np.ndarray) -> np.ndarray:
        if self.source is None:
            raise SpecError(f"{self.descriptor['variant']} has no source term")
        return self.source(as_dense(h0, "h0"))

    def __call__(self, h: np.ndarray) -> np.ndarray:
        out = self.apply_homogeneous(h)
        if self.source is not None:
            if self.h0 is None:
                raise SpecError(f"{self.descriptor['variant']} needs a bound h0 before it is applied")
            out = out + self.source(self.h0)
        return out

    def dense_matrix(self) -> np.ndarray:
        return self.apply_homogeneous(np.eye(self.n))

    def source_matrix(self) -> np.ndarray:
        return self.apply_source(np.eye(self.n))


def _check_spd_pair(m: sp.csr_matrix, lam: float, mu: float, name: str) -> None:
    n = m.shape[0]
    eye = identity(n)
    for coeff in (lam, mu):
        smallest = min_eigenvalue(canonical_csr(eye + coeff * m))
        if smallest <= SPD_MARGIN:
            raise ParameterError(
                f"{name}: I + {coeff:.6g} * M is not positive definite (min eigenvalue {smallest:.3e})",
                lam=lam, mu=mu,
            )


def _series(a_hat: sp.csr_matrix, weights: np.ndarray, apply_outer: bool) -> DenseMap:
    # Horner: sum_k w_k A^k h  ==  w_0 h + A(w_1 h + A(w_2 h + ...))
    def run(h: np.ndarray) -> np.ndarray:
        acc = weights[-1] * h
        for w in weights[-2::-1]:
            acc = w * h + spmm(a_hat, acc)
        return spmm(a_hat, acc) if apply_outer else acc
    return run


def _resolvent(m_solve: sp.csr_matrix, m_rhs: sp.csr_matrix, tol: float, max_iter: int) -> DenseMap:
    def run(h: np.ndarray) -> np.ndarray:
        return solve_spd(m_solve, spmm(m_rhs, h), tol=tol, max_iter=max_iter)
    return run


def build_propagation(
    spec: RegularizerSpec,
    ops: GraphOperators,
    h0: Optional[np.ndarray] = None,
    deferred_source: bool = False,
    feature_dim: Optional[int] = None,
    eig_config: Optional[EigConfig] = None,
) -> PropagationOperator:
    """Propagation operator of a catalog variant.

    APPNP and DAGNN need the source H0: pass `h0`, or `deferred_source=True`
    and bind it later (the network binds its MLP output).
    """
    v = spec.variant
    if spec.needs_source and h0 is None and not deferred_source:
        raise SpecError(f"{v.value} needs the source term h0")
    if not spec.needs_source and h0 is not None:
        raise SpecError(f"{v.value} takes no source term, but h0 was given")

    n = ops.n
    a_hat = ops.a_hat
    descriptor: Dict[str, Any] = {
        "variant": v.value,
        **spec.hyperparameters(),
        "source_bound": False,
    }
    homogeneous: Optional[DenseMap] = None
    source: Optional[DenseMap] = None
    transpose: Optional[DenseMap] = None

    if v in (Variant.GCN, Variant.SGC):
        homogeneous = lambda h: spmm(a_hat, h)
        descriptor["path"] = "sparse"
    elif v == Variant.APPNP:
        alpha = spec.alpha
        homogeneous = lambda h: (1.0 - alpha) * spmm(a_hat, h)
        source = lambda s: alpha * s
        descriptor["path"] = "sparse"
    elif v == Variant.JKNET:
        homogeneous = _series(a_hat, series_weights(v, spec.beta, spec.k_order), apply_outer=True)
        descriptor["path"] = "horner"
    elif v == Variant.DAGNN:
        source = _series(a_hat, series_weights(v, spec.beta, spec.k_order), apply_outer=False)
        descriptor["path"] = "horner"
    elif v in (Variant.GNN_HF, Variant.GNN_LF):
        if v == Variant.GNN_HF:
            lam, mu = hf_lambda_mu(spec.alpha, spec.beta)
            m = ops.l_hat
        else:
            lam, mu = lf_lambda_mu(spec.alpha, spec.beta)
            m = a_hat
        _check_spd_pair(m, lam, mu, v.value)
        eye = identity(n)
        homogeneous = _resolvent(
            canonical_csr(eye + lam * m), canonical_csr(eye + mu * m),
            spec.cg_tol, spec.cg_max_iter,
        )
        descriptor.update(path="cg", lam=lam, mu=mu)
    else:
        rank = n
        if not spec.exact_inverse:
            if isinstance(spec.rank, str) and not spec.rank.strip().isdigit() and feature_dim is None:
                raise SpecError(f"rank expression {spec.rank!r} needs the feature dimension")
            rank = resolve_rank(spec.rank, feature_dim or 0)
            if rank > n:
                logger.warning(f"rank {rank} exceeds N={n}; clipping to full rank")
                rank = n
        ts_op = build_tsgcn_operator(ops, spec.alpha, spec.beta, rank, exact=spec.exact_inverse, eig_config=eig_config)
        homogeneous = ts_op
        if ts_op.inverse is not None:
            inverse_t = np.ascontiguousarray(ts_op.inverse.T)
            transpose = lambda g: inverse_t @ g
        descriptor.update(path=ts_op.kind, resolved_rank=ts_op.rank, tsgcn=ts_op.metadata())

    op = PropagationOperator(
        n=n, homogeneous=homogeneous, descriptor=descriptor, source=source, transpose=transpose,
    )
    if h0 is not None:
        op = op.bind(h0)
    logger.debug(f"Built propagation for {v.value}: {descriptor.get('path')}")
    return op
