"""Layered network with hand-written reverse mode.

Layered variants:    H^l = project_l(P(H^{l-1} Theta^l))
Decoupled variants (APPNP, DAGNN): an MLP gives Z = H^0, then
    h_0 = Z,  h_k = T(h_{k-1}) + S(Z)   (APPNP: K steps, DAGNN: one step)
and the output is softmax(h_K).
"""

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from src.core.errors import ContractError, NonFiniteError, ShapeError
from src.framework.propagation import PropagationOperator
from src.framework.regularizers import ProjectiveSet, RegularizerSpec, Variant
from src.network.activations import log_softmax, project, project_backward, relu_project, softmax_project


@dataclass
class ModelParams:
    thetas: List[np.ndarray]
    spec: RegularizerSpec
    # Adam state, one buffer per theta
    first_moments: List[np.ndarray] = field(default_factory=list)
    second_moments: List[np.ndarray] = field(default_factory=list)
    step: int = 0

    @property
    def n_layers(self) -> int:
        return len(self.thetas)

    @property
    def dims(self) -> List[int]:
        return [self.thetas[0].shape[0]] + [t.shape[1] for t in self.thetas]

    def copy(self) -> "ModelParams":
        return ModelParams(
            thetas=[t.copy() for t in self.thetas],
            spec=self.spec,
            first_moments=[m.copy() for m in self.first_moments],
            second_moments=[v.copy() for v in self.second_moments],
            step=self.step,
        )


@dataclass
class ForwardTrace:
    layer_inputs: List[np.ndarray]      # H^{l-1} per layer
    pre_activations: List[np.ndarray]   # value fed to each projection
    activations: List[np.ndarray]       # H^l; the last one is on the simplex
    logits: np.ndarray
    source: Optional[np.ndarray] = None  # Z for decoupled variants
    steps: int = 0

    @property
    def probabilities(self) -> np.ndarray:
        return self.activations[-1]


def is_decoupled(spec: RegularizerSpec) -> bool:
    return spec.variant in (Variant.APPNP, Variant.DAGNN)


def propagation_steps(spec: RegularizerSpec) -> int:
    if spec.variant == Variant.APPNP:
        return spec.k_order
    if spec.variant == Variant.DAGNN:
        return 1
    return 0


def layer_dims(n_features: int, n_classes: int, hidden_units: int, n_layers: int) -> List[int]:
    return [n_features] + [hidden_units] * (n_layers - 1) + [n_classes]


def init_params(dims: List[int], spec: RegularizerSpec, seed: int) -> ModelParams:
    """Glorot-uniform weights."""
    if len(dims) < 2:
        raise ShapeError(f"need at least one layer, got dims {dims}")
    rng = np.random.default_rng(seed)
    thetas = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        thetas.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
    return ModelParams(
        thetas=thetas,
        spec=spec,
        first_moments=[np.zeros_like(t) for t in thetas],
        second_moments=[np.zeros_like(t) for t in thetas],
    )


def _checked(arr: np.ndarray, layer: int, what: str) -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"non-finite {what} at layer {layer}")
    return arr


def forward(
    params: ModelParams,
    prop: PropagationOperator,
    x: np.ndarray,
    spec: Optional[RegularizerSpec] = None,
) -> ForwardTrace:
    spec = spec or params.spec
    if x.shape[1] != params.thetas[0].shape[0]:
        raise ShapeError(f"features have {x.shape[1]} columns, first layer expects {params.thetas[0].shape[0]}")
    sets = spec.activation_family(params.n_layers)
    inputs, pres, acts = [], [], []
    h = x

    if not is_decoupled(spec):
        for l, (theta, target) in enumerate(zip(params.thetas, sets), start=1):
            inputs.append(h)
            p = _checked(prop.apply_homogeneous(h @ theta), l, "propagation output")
            pres.append(p)
            h = _checked(project(p, target), l, "activation")
            acts.append(h)
        return ForwardTrace(layer_inputs=inputs, pre_activations=pres, activations=acts, logits=pres[-1])

    for l, theta in enumerate(params.thetas, start=1):
        inputs.append(h)
        z = _checked(h @ theta, l, "pre-activation")
        pres.append(z)
        if l < params.n_layers:
            h = relu_project(z)
            acts.append(h)
    source = pres[-1]
    bound = prop.bind(source)
    steps = propagation_steps(spec)
    out = source
    for _ in range(steps):
        out = bound(out)
    logits = _checked(out, params.n_layers, "propagated logits")
    acts.append(softmax_project(logits))
    return ForwardTrace(
        layer_inputs=inputs, pre_activations=pres, activations=acts,
        logits=logits, source=source, steps=steps,
    )


def cross_entropy(trace: ForwardTrace, labels: np.ndarray, idx: np.ndarray) -> float:
    if len(idx) == 0:
        raise ContractError("cross-entropy needs a nonempty index set")
    logp = log_softmax(trace.logits[idx])
    return float(-np.mean(logp[np.arange(len(idx)), labels[idx]]))


def loss_and_grads(
    trace: ForwardTrace,
    params: ModelParams,
    prop: PropagationOperator,
    labels: np.ndarray,
    train_idx: np.ndarray,
    weight_decay: float,
) -> Tuple[float, List[np.ndarray]]:
    """Masked mean cross-entropy plus (weight_decay / 2) sum ||Theta||_F^2, and its gradients."""
    train_idx = np.asarray(train_idx, dtype=np.int64)
    if train_idx.size == 0:
        raise ContractError("train_idx is empty")
    spec = params.spec
    decay = 0.5 * weight_decay * sum(float(np.sum(t * t)) for t in params.thetas)
    loss = cross_entropy(trace, labels, train_idx) + decay

    # fused softmax + cross-entropy
    g = np.zeros_like(trace.logits)
    g[train_idx] = trace.probabilities[train_idx]
    g[train_idx, labels[train_idx]] -= 1.0
    g /= train_idx.size

    grads: List[Optional[np.ndarray]] = [None] * params.n_layers
    sets = spec.activation_family(params.n_layers)

    if is_decoupled(spec):
        g_source = np.zeros_like(g)
        for _ in range(trace.steps):
            g_source += prop.apply_source(g)
            g = prop.apply_transpose(g)
        g = g_source + g
        for l in range(params.n_layers - 1, -1, -1):
            grads[l] = trace.layer_inputs[l].T @ g + weight_decay * params.thetas[l]
            if l > 0:
                g = project_backward(g @ params.thetas[l].T, trace.pre_activations[l - 1], ProjectiveSet.NONNEG)
        return loss, grads

    for l in range(params.n_layers - 1, -1, -1):
        g_z = prop.apply_transpose(g)
        grads[l] = trace.layer_inputs[l].T @ g_z + weight_decay * params.thetas[l]
        if l > 0:
            g = project_backward(g_z @ params.thetas[l].T, trace.pre_activations[l - 1], sets[l - 1])
    return loss, grads


def predict(trace: ForwardTrace) -> np.ndarray:
    return np.argmax(trace.probabilities, axis=1)
