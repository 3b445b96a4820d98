"""Activations as projections onto the layer's feasible set."""

import numpy as np

from src.core.errors import ContractError
from src.framework.regularizers import ProjectiveSet


def relu_project(x: np.ndarray) -> np.ndarray:
    """argmin_{y >= 0} -x^T y + 1/2 ||y||^2."""
    return np.maximum(x, 0.0)


def softmax_project(x: np.ndarray) -> np.ndarray:
    """argmin_{y in simplex} -x^T y + y^T log y, row-wise."""
    shifted = x - np.max(x, axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=1, keepdims=True)


def log_softmax(x: np.ndarray) -> np.ndarray:
    shifted = x - np.max(x, axis=1, keepdims=True)
    return shifted - np.log(np.sum(np.exp(shifted), axis=1, keepdims=True))


def project(x: np.ndarray, target: ProjectiveSet) -> np.ndarray:
    if target == ProjectiveSet.NONNEG:
        return relu_project(x)
    if target == ProjectiveSet.SIMPLEX:
        return softmax_project(x)
    return x


def project_backward(grad: np.ndarray, pre: np.ndarray, target: ProjectiveSet) -> np.ndarray:
    """Backward through a hidden projection; subgradient 0 at exactly 0 for ReLU."""
    if target == ProjectiveSet.NONNEG:
        return grad * (pre > 0.0)
    if target == ProjectiveSet.SIMPLEX:
        raise ContractError("the simplex projection is differentiated jointly with the loss")
    return grad
