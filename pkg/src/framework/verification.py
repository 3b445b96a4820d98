"""Small-instance oracles: the regularized objective and the stationarity check.

For each variant the closed-form propagation is compared against a dense solve
of the objective's first-order condition  R H = B  built from the regularizer
matrix. Where R contains A_hat^-1 and A_hat is near singular, the condition is
premultiplied by A_hat instead.
"""

from typing import Optional, Tuple

import numpy as np
import scipy.linalg
from pydantic import BaseModel

from src.core.config import settings
from src.core.errors import GuardError, SpecError, TheoremVerificationError
from src.core.logging import get_logger
from src.framework.propagation import build_propagation
from src.framework.regularizers import RegularizerSpec, Variant, regularizer_matrix
from src.graph.construction import GraphOperators, build_graph_operators
from src.linalg.kernels import as_dense, dense_inverse
from src.lowrank.eigensolver import EigConfig

logger = get_logger(__name__)

STATIONARITY_TOL = 1e-8
ORACLE_CG_TOL = 1e-12
NULLSPACE_TOL = 1e-10
# below this |eig(A_hat)| the oracles avoid forming A_hat^-1
A_HAT_MIN_EIG = 1e-3


class StationarityReport(BaseModel):
    """One variant x seed check; `error` is set when the check could not run."""

    variant: str
    seed: int
    n: int
    discrepancy: Optional[float] = None
    tolerance: float
    passed: bool
    oracle: str
    truncation_gap: Optional[float] = None
    error: Optional[str] = None


def _guard(ops: GraphOperators) -> None:
    if ops.n > settings.DENSE_ORACLE_MAX_N:
        raise GuardError(f"dense oracle is limited to N <= {settings.DENSE_ORACLE_MAX_N}, got N={ops.n}")


def regularizer_objective(
    spec: RegularizerSpec,
    ops: GraphOperators,
    h: np.ndarray,
    h_prev_theta: np.ndarray,
    h0: Optional[np.ndarray] = None,
) -> float:
    """J(H) = -Tr(H^T B) + 1/2 L(H; G), evaluated densely."""
    _guard(ops)
    h = as_dense(h, "h")
    b = as_dense(h_prev_theta, "h_prev_theta")
    r = regularizer_matrix(spec, ops)
    value = -np.sum(h * b) + 0.5 * np.sum(h * (r @ h))
    if spec.variant == Variant.APPNP:
        if h0 is None:
            raise SpecError("the APPNP objective needs h0")
        value -= spec.alpha * np.sum(h * (r @ as_dense(h0, "h0")))
    return float(value)


def regularizer_gradient(
    spec: RegularizerSpec,
    ops: GraphOperators,
    h: np.ndarray,
    h_prev_theta: np.ndarray,
    h0: Optional[np.ndarray] = None,
) -> np.ndarray:
    _guard(ops)
    r = regularizer_matrix(spec, ops)
    grad = -as_dense(h_prev_theta) + 0.5 * (r + r.T) @ as_dense(h)
    if spec.variant == Variant.APPNP:
        if h0 is None:
            raise SpecError("the APPNP objective needs h0")
        grad -= spec.alpha * (r @ as_dense(h0, "h0"))
    return grad


def random_instance(
    seed: int,
    nodes_max: int = 32,
    edge_prob: float = 0.3,
    n_features: int = 5,
    out_dim: int = 3,
) -> Tuple[GraphOperators, np.ndarray, np.ndarray]:
    """Erdos-Renyi graph with random features, fitting target B and source H0."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(6, max(nodes_max, 6) + 1))
    upper = np.triu(rng.random((n, n)) < edge_prob, k=1)
    adjacency = (upper | upper.T).astype(np.float64)
    features = rng.random((n, n_features))
    ops = build_graph_operators(adjacency, features, k_sem=min(3, n - 1))
    b = rng.standard_normal((n, out_dim))
    h0 = rng.standard_normal((n, out_dim))
    return ops, b, h0


def _a_hat_invertible(a_hat: np.ndarray) -> bool:
    return float(np.min(np.abs(np.linalg.eigvalsh(a_hat)))) > A_HAT_MIN_EIG


def _resolvent_series_limit(ops: GraphOperators, beta: float) -> np.ndarray:
    # (I + beta L_hat)^-1 == 1/(beta+1) (I - beta/(beta+1) A_hat)^-1
    a_hat = ops.a_hat.toarray()
    ratio = beta / (beta + 1.0)
    return dense_inverse(np.eye(ops.n) - ratio * a_hat) / (beta + 1.0)


def _closed_and_oracle(
    spec: RegularizerSpec, ops: GraphOperators, b: np.ndarray, h0: np.ndarray, seed: int
) -> Tuple[np.ndarray, np.ndarray, str, Optional[float]]:
    v = spec.variant
    n = ops.n
    eye = np.eye(n)
    a_hat = ops.a_hat.toarray()
    l_hat = ops.l_hat.toarray()

    if v in (Variant.GCN, Variant.SGC):
        # L_topo is singular: compare minimum-norm solutions on range(L_topo)
        l_topo = ops.l_topo.toarray()
        vals, vecs = scipy.linalg.eigh(l_topo)
        basis = vecs[:, vals > NULLSPACE_TOL]
        b_range = basis @ (basis.T @ b)
        a_tilde = eye - l_topo
        closed = np.linalg.pinv(eye - a_tilde, rcond=NULLSPACE_TOL, hermitian=True) @ b_range
        oracle = scipy.linalg.lstsq(l_topo, b_range, cond=NULLSPACE_TOL)[0]
        first_order = build_propagation(spec, ops)(b_range)
        return closed, oracle, "min-norm", float(np.max(np.abs(first_order - closed)))

    if v == Variant.APPNP:
        closed = build_propagation(spec, ops, h0=h0)(b)
        if _a_hat_invertible(a_hat):
            # R H = B + alpha R H0 with R = A_hat^-1 / (1 - alpha)
            r = regularizer_matrix(spec, ops)
            oracle = scipy.linalg.solve(r, b + spec.alpha * (r @ h0))
            return closed, oracle, "dense", None
        # premultiplied by (1 - alpha) A_hat, no A_hat^-1 needed
        rhs = (1.0 - spec.alpha) * (a_hat @ b) + spec.alpha * h0
        return closed, rhs, "fixed-point", None

    if v == Variant.JKNET:
        closed = _resolvent_series_limit(ops, spec.beta) @ (a_hat @ b)
        truncated = build_propagation(spec, ops)(b)
        gap = float(np.max(np.abs(truncated - closed)))
        if _a_hat_invertible(a_hat):
            oracle = scipy.linalg.solve(regularizer_matrix(spec, ops), b)
            return closed, oracle, "dense", gap
        oracle = scipy.linalg.solve(eye + spec.beta * l_hat, a_hat @ b, assume_a="sym")
        return closed, oracle, "premultiplied", gap

    if v == Variant.DAGNN:
        closed = _resolvent_series_limit(ops, spec.beta) @ h0
        oracle = scipy.linalg.solve(eye + spec.beta * l_hat, h0, assume_a="sym")
        truncated = build_propagation(spec, ops, h0=h0)(b)
        return closed, oracle, "dense", float(np.max(np.abs(truncated - closed)))

    if v in (Variant.GNN_HF, Variant.GNN_LF):
        tight = spec.model_copy(update={"cg_tol": ORACLE_CG_TOL})
        closed = build_propagation(tight, ops)(b)
        oracle = scipy.linalg.solve(regularizer_matrix(spec, ops), b)
        return closed, oracle, "dense", None

    full_rank = spec.model_copy(update={"rank": n, "exact_inverse": False})
    closed = build_propagation(full_rank, ops, eig_config=EigConfig(seed=seed))(b)
    oracle = scipy.linalg.solve(regularizer_matrix(spec, ops), b, assume_a="sym")
    return closed, oracle, "dense", None


def verify_stationarity(
    spec: RegularizerSpec,
    ops: Optional[GraphOperators] = None,
    seed: int = 0,
    perturb: float = 0.0,
    nodes_max: int = 32,
    tol: float = STATIONARITY_TOL,
    raise_on_failure: bool = True,
) -> StationarityReport:
    """Closed-form propagation vs. the dense stationarity solve on a small instance.

    Without `ops` a random graph is drawn from `seed`. `perturb` scales the
    closed form by (1 + perturb) as a negative control.
    """
    if ops is None:
        ops, b, h0 = random_instance(seed, nodes_max=nodes_max)
    else:
        _guard(ops)
        rng = np.random.default_rng(seed)
        b = rng.standard_normal((ops.n, 3))
        h0 = rng.standard_normal((ops.n, 3))

    closed, oracle, kind, gap = _closed_and_oracle(spec, ops, b, h0, seed)
    if perturb:
        closed = closed * (1.0 + perturb)
    discrepancy = float(np.max(np.abs(closed - oracle)))
    report = StationarityReport(
        variant=spec.label(),
        seed=seed,
        n=ops.n,
        discrepancy=discrepancy,
        tolerance=tol,
        passed=discrepancy <= tol,
        oracle=kind,
        truncation_gap=gap,
    )
    logger.debug(
        f"stationarity {report.variant} seed={seed} N={ops.n}: discrepancy={discrepancy:.2e} ({kind})"
    )
    if not report.passed and raise_on_failure:
        raise TheoremVerificationError(report.variant, discrepancy, tol)
    return report
