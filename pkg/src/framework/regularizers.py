"""Variant catalog: regularizer specs, defaults, parameter maps and dense regularizer matrices."""

import re
from enum import Enum
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from src.core.config import settings
from src.core.errors import GuardError, SpecError
from src.graph.construction import GraphOperators
from src.linalg.kernels import dense_inverse
from src.lowrank.woodbury import joint_laplacian


class Variant(str, Enum):
    GCN = "gcn"
    SGC = "sgc"
    APPNP = "appnp"
    JKNET = "jknet"
    DAGNN = "dagnn"
    GNN_LF = "gnn_lf"
    GNN_HF = "gnn_hf"
    TSGCN = "tsgcn"
    TSGCN_S = "tsgcn_s"
    TSGCN_T = "tsgcn_t"


class ProjectiveSet(str, Enum):
    REAL = "S"          # identity activation
    NONNEG = "S+"       # ReLU
    SIMPLEX = "S_simplex"  # softmax


FRAMEWORK_VARIANTS: Tuple[Variant, ...] = (
    Variant.GCN, Variant.SGC, Variant.APPNP, Variant.JKNET,
    Variant.DAGNN, Variant.GNN_LF, Variant.GNN_HF, Variant.TSGCN,
)
TSGCN_FAMILY = frozenset({Variant.TSGCN, Variant.TSGCN_S, Variant.TSGCN_T})
SOURCE_VARIANTS = frozenset({Variant.APPNP, Variant.DAGNN})

HIDDEN_SET: Dict[Variant, ProjectiveSet] = {
    Variant.GCN: ProjectiveSet.NONNEG,
    Variant.SGC: ProjectiveSet.REAL,
    Variant.APPNP: ProjectiveSet.REAL,
    Variant.JKNET: ProjectiveSet.REAL,
    Variant.DAGNN: ProjectiveSet.REAL,
    Variant.GNN_LF: ProjectiveSet.NONNEG,
    Variant.GNN_HF: ProjectiveSet.NONNEG,
    Variant.TSGCN: ProjectiveSet.NONNEG,
    Variant.TSGCN_S: ProjectiveSet.NONNEG,
    Variant.TSGCN_T: ProjectiveSet.NONNEG,
}

# (alpha, beta, k_order) filled in when a spec leaves them unset
VARIANT_DEFAULTS: Dict[Variant, Tuple[Optional[float], Optional[float], Optional[int]]] = {
    Variant.GCN: (None, None, None),
    Variant.SGC: (None, None, None),
    Variant.APPNP: (0.1, None, 10),
    Variant.JKNET: (None, 1.0, 10),
    Variant.DAGNN: (None, 1.0, 10),
    Variant.GNN_LF: (0.5, 0.5, None),
    Variant.GNN_HF: (0.5, 0.5, None),
    Variant.TSGCN: (1.0, 0.2, None),
    Variant.TSGCN_S: (0.0, 0.2, None),
    Variant.TSGCN_T: (1.0, 0.0, None),
}

DEFAULT_RANK = "d/16"
_RANK_DIV = re.compile(r"^\s*d\s*/\s*(\d+)\s*$")
_RANK_POW = re.compile(r"^\s*d\s*/\s*2\s*\^\s*(\d+)\s*$")


class RegularizerSpec(BaseModel):
    """One regularizer of the catalog together with its hyperparameters."""

    model_config = ConfigDict(frozen=True, use_enum_values=False)

    variant: Variant = Variant.TSGCN
    alpha: Optional[float] = None
    beta: Optional[float] = None
    k_order: Optional[int] = Field(None, description="Truncation order K for JKNet / DAGNN; propagation steps for APPNP")
    rank: Union[int, str] = Field(DEFAULT_RANK, description="Absolute rank or a d/2^k expression")
    exact_inverse: bool = False
    cg_tol: float = settings.DEFAULT_CG_TOL
    cg_max_iter: int = settings.DEFAULT_CG_MAX_ITER

    @model_validator(mode="before")
    @classmethod
    def _fill_defaults(cls, data):
        if not isinstance(data, dict):
            return data
        data = dict(data)
        try:
            variant = Variant(data.get("variant", Variant.TSGCN))
        except ValueError:
            return data
        alpha, beta, k_order = VARIANT_DEFAULTS[variant]
        for key, default in (("alpha", alpha), ("beta", beta), ("k_order", k_order)):
            if data.get(key) is None:
                data[key] = default
        # ablations pin one of the two regularizer weights
        if variant == Variant.TSGCN_S:
            data["alpha"] = 0.0
        elif variant == Variant.TSGCN_T:
            data["beta"] = 0.0
        return data

    @model_validator(mode="after")
    def _check_ranges(self):
        problems: List[str] = []
        v, a, b, k = self.variant, self.alpha, self.beta, self.k_order
        if v == Variant.APPNP and not 0.0 <= a < 1.0:
            problems.append(f"APPNP needs alpha in [0, 1), got {a}")
        if v in (Variant.APPNP, Variant.JKNET, Variant.DAGNN) and (k is None or k < 1):
            problems.append(f"{v.value} needs k_order >= 1, got {k}")
        if v in (Variant.JKNET, Variant.DAGNN) and b < 0:
            problems.append(f"{v.value} needs beta >= 0, got {b}")
        if v == Variant.GNN_HF and not a > 0:
            problems.append(f"GNN-HF needs alpha > 0, got {a}")
        if v == Variant.GNN_LF:
            if not b > 0:
                problems.append(f"GNN-LF needs beta > 0, got {b}")
            if abs(a * b - a + 1) < 1e-12:
                problems.append(f"GNN-LF map is undefined for alpha*beta - alpha + 1 = 0 (alpha={a}, beta={b})")
        if v in TSGCN_FAMILY and (a < 0 or b < 0):
            problems.append(f"{v.value} needs alpha, beta >= 0, got alpha={a}, beta={b}")
        if isinstance(self.rank, int) and self.rank < 1:
            problems.append(f"rank must be >= 1, got {self.rank}")
        if isinstance(self.rank, str) and not (_RANK_DIV.match(self.rank) or _RANK_POW.match(self.rank)):
            problems.append(f"rank expression {self.rank!r} is not an int, 'd/<m>' or 'd/2^k'")
        if self.cg_tol <= 0:
            problems.append(f"cg_tol must be positive, got {self.cg_tol}")
        if problems:
            raise ValueError("; ".join(problems))
        return self

    @property
    def hidden_set(self) -> ProjectiveSet:
        return HIDDEN_SET[self.variant]

    def activation_family(self, n_layers: int) -> List[ProjectiveSet]:
        return [self.hidden_set] * (n_layers - 1) + [ProjectiveSet.SIMPLEX]

    @property
    def needs_source(self) -> bool:
        return self.variant in SOURCE_VARIANTS

    @property
    def is_tsgcn(self) -> bool:
        return self.variant in TSGCN_FAMILY

    def label(self) -> str:
        if self.is_tsgcn and self.exact_inverse:
            return f"{self.variant.value}_inv"
        return self.variant.value

    def hyperparameters(self) -> Dict[str, Union[float, int, str, None]]:
        return {"alpha": self.alpha, "beta": self.beta, "k_order": self.k_order, "rank": self.rank}


def resolve_rank(rank: Union[int, str], d: int) -> int:
    """Resolve an int or a 'd/m' / 'd/2^k' expression to floor(d / m)."""
    if isinstance(rank, int):
        value = rank
    else:
        text = str(rank)
        if text.strip().isdigit():
            value = int(text)
        elif (m := _RANK_POW.match(text)) is not None:
            value = d // (2 ** int(m.group(1)))
        elif (m := _RANK_DIV.match(text)) is not None:
            divisor = int(m.group(1))
            if divisor == 0:
                raise SpecError(f"rank expression {rank!r} divides by zero")
            value = d // divisor
        else:
            raise SpecError(f"unrecognised rank expression {rank!r}")
    if value < 1:
        raise SpecError(f"rank {rank!r} resolves to {value} for d={d}; it must be >= 1")
    return value


def hf_lambda_mu(alpha: float, beta: float) -> Tuple[float, float]:
    return beta + 1.0 / alpha - 1.0, beta


def lf_lambda_mu(alpha: float, beta: float) -> Tuple[float, float]:
    lam = (-alpha * beta + 2.0 * alpha - 1.0) / (alpha * beta - alpha + 1.0)
    mu = 1.0 / beta - 1.0
    return lam, mu


def series_weights(variant: Variant, beta: float, k_order: int) -> np.ndarray:
    """Coefficients a_k of sum_k a_k A_hat^k: index k for DAGNN (k=0..K), k-1 for JKNet (k=1..K)."""
    ratio = beta / (beta + 1.0)
    if variant == Variant.JKNET:
        return np.array([ratio ** (k - 1) / (beta + 1.0) for k in range(1, k_order + 1)])
    if variant == Variant.DAGNN:
        return np.array([ratio ** k / (beta + 1.0) for k in range(0, k_order + 1)])
    raise SpecError(f"{variant.value} has no series weights")


def regularizer_matrix(spec: RegularizerSpec, ops: GraphOperators) -> np.ndarray:
    """Dense R with regularizer Tr(H^T R H) (APPNP also carries a source term)."""
    n = ops.n
    if n > settings.DENSE_ORACLE_MAX_N:
        raise GuardError(f"dense regularizer evaluation is limited to N <= {settings.DENSE_ORACLE_MAX_N}, got {n}")
    eye = np.eye(n)
    a_hat = ops.a_hat.toarray()
    l_hat = ops.l_hat.toarray()
    v = spec.variant

    if v in (Variant.GCN, Variant.SGC):
        return ops.l_topo.toarray()
    if v == Variant.APPNP:
        return dense_inverse(a_hat) / (1.0 - spec.alpha)
    if v == Variant.JKNET:
        return dense_inverse(a_hat) @ (eye + spec.beta * l_hat)
    if v == Variant.DAGNN:
        return eye + spec.beta * l_hat
    if v == Variant.GNN_HF:
        lam, mu = hf_lambda_mu(spec.alpha, spec.beta)
        return dense_inverse(eye + mu * l_hat) @ (eye + lam * l_hat)
    if v == Variant.GNN_LF:
        lam, mu = lf_lambda_mu(spec.alpha, spec.beta)
        return dense_inverse(eye + mu * a_hat) @ (eye + lam * a_hat)
    return eye + joint_laplacian(ops, spec.alpha, spec.beta).toarray()
