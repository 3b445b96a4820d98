from typing import List

import numpy as np

from src.core.errors import NonFiniteError, ShapeError
from src.network.model import ModelParams


class Adam:
    """Adam with bias correction; moments live on the ModelParams."""

    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps

    def step(self, params: ModelParams, grads: List[np.ndarray]) -> None:
        if len(grads) != params.n_layers:
            raise ShapeError(f"got {len(grads)} gradients for {params.n_layers} layers")
        if not params.first_moments:
            params.first_moments = [np.zeros_like(t) for t in params.thetas]
            params.second_moments = [np.zeros_like(t) for t in params.thetas]

        params.step += 1
        t = params.step
        correction1 = 1.0 - self.beta1 ** t
        correction2 = 1.0 - self.beta2 ** t
        for l, g in enumerate(grads):
            m = params.first_moments[l]
            v = params.second_moments[l]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            params.thetas[l] -= self.lr * (m / correction1) / (np.sqrt(v / correction2) + self.eps)
            if not np.all(np.isfinite(params.thetas[l])):
                raise NonFiniteError(f"non-finite weights in layer {l + 1} after step {t}")
