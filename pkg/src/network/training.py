"""Full-batch training loop with early stopping, plus accuracy / macro-F1."""

import time
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field

from src.core.errors import ContractError, RegGcnError
from src.core.logging import get_logger
from src.framework.propagation import PropagationOperator, build_propagation
from src.framework.regularizers import RegularizerSpec
from src.graph.construction import GraphOperators, build_graph_operators
from src.graph.dataset import Dataset
from src.lowrank.eigensolver import EigConfig
from src.network.model import (
    ForwardTrace,
    ModelParams,
    cross_entropy,
    forward,
    init_params,
    layer_dims,
    loss_and_grads,
    predict,
)
from src.network.optimizer import Adam

logger = get_logger(__name__)


class TrainConfig(BaseModel):
    lr: float = Field(1e-2, gt=0)
    weight_decay: float = Field(5e-4, ge=0)
    hidden_units: int = Field(32, ge=1)
    n_layers: int = Field(2, ge=1)
    max_epochs: int = Field(500, ge=1)
    patience: int = Field(100, ge=0)
    seed: int = 0


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    train_acc: float
    val_acc: float
    val_loss: float
    seconds: float


@dataclass
class TrainResult:
    best_params: ModelParams
    best_epoch: int
    prop: PropagationOperator
    history: List[EpochRecord] = field(default_factory=list)
    train_seconds: float = 0.0

    @property
    def epochs(self) -> int:
        return len(self.history)

    @property
    def median_epoch_seconds(self) -> float:
        return float(np.median([r.seconds for r in self.history])) if self.history else 0.0


def accuracy(y_true: np.ndarray, y_pred: np.ndarray) -> float:
    return float(np.mean(y_true == y_pred))


def macro_f1(y_true: np.ndarray, y_pred: np.ndarray, n_classes: int) -> float:
    """Unweighted mean F1 over all classes; a class with no support and no predictions scores 0."""
    confusion = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(confusion, (y_true, y_pred), 1)
    tp = np.diag(confusion).astype(np.float64)
    fp = confusion.sum(axis=0) - tp
    fn = confusion.sum(axis=1) - tp
    denom = 2 * tp + fp + fn
    f1 = np.divide(2 * tp, denom, out=np.zeros(n_classes), where=denom > 0)
    return float(f1.mean())


def _scores(trace: ForwardTrace, ds: Dataset, idx: np.ndarray) -> Tuple[float, float]:
    pred = predict(trace)[idx]
    truth = ds.labels[idx]
    return accuracy(truth, pred), macro_f1(truth, pred, ds.num_classes)


def evaluate(
    params: ModelParams,
    prop: PropagationOperator,
    ds: Dataset,
    idx_set: np.ndarray,
) -> Tuple[float, float]:
    """(accuracy, macro_f1) on idx_set."""
    idx_set = np.asarray(idx_set, dtype=np.int64)
    if idx_set.size == 0:
        raise ContractError("evaluate needs a nonempty index set")
    return _scores(forward(params, prop, ds.features), ds, idx_set)


def prepare_propagation(
    ds: Dataset,
    spec: RegularizerSpec,
    ops: Optional[GraphOperators] = None,
    k_sem: int = 10,
    eig_config: Optional[EigConfig] = None,
) -> PropagationOperator:
    ops = ops or build_graph_operators(ds.adjacency, ds.features, k_sem=k_sem)
    return build_propagation(
        spec, ops, deferred_source=True, feature_dim=ds.num_features, eig_config=eig_config,
    )


def train(
    ds: Dataset,
    spec: RegularizerSpec,
    cfg: TrainConfig,
    prop: Optional[PropagationOperator] = None,
    ops: Optional[GraphOperators] = None,
    k_sem: int = 10,
    eig_config: Optional[EigConfig] = None,
) -> TrainResult:
    """Adam on the masked loss; keeps the parameters of the best validation epoch.

    Best = highest validation accuracy, ties broken by lower validation loss.
    Stops after `patience` epochs without improvement. An empty validation set
    disables early stopping and keeps the last epoch.
    """
    if ds.train_idx.size == 0:
        raise ContractError(f"dataset {ds.name} has an empty training set")
    prop = prop or prepare_propagation(ds, spec, ops=ops, k_sem=k_sem, eig_config=eig_config)

    dims = layer_dims(ds.num_features, ds.num_classes, cfg.hidden_units, cfg.n_layers)
    params = init_params(dims, spec, cfg.seed)
    adam = Adam(cfg.lr)
    has_val = ds.val_idx.size > 0

    start = time.perf_counter()
    trace = forward(params, prop, ds.features)
    history: List[EpochRecord] = []
    best = params.copy()
    best_epoch, best_acc, best_loss = 0, -np.inf, np.inf
    waited = 0

    for epoch in range(1, cfg.max_epochs + 1):
        t0 = time.perf_counter()
        try:
            loss, grads = loss_and_grads(trace, params, prop, ds.labels, ds.train_idx, cfg.weight_decay)
            adam.step(params, grads)
            trace = forward(params, prop, ds.features)
        except RegGcnError as e:
            logger.error(f"Training {spec.label()} aborted at epoch {epoch}: {e}")
            e.epoch = epoch
            raise
        seconds = time.perf_counter() - t0

        train_acc, _ = _scores(trace, ds, ds.train_idx)
        if has_val:
            val_acc, _ = _scores(trace, ds, ds.val_idx)
            val_loss = cross_entropy(trace, ds.labels, ds.val_idx)
        else:
            val_acc, val_loss = float("nan"), float("nan")
        history.append(EpochRecord(epoch, loss, train_acc, val_acc, val_loss, seconds))

        if not has_val:
            best, best_epoch = params.copy(), epoch
            continue
        if val_acc > best_acc or (val_acc == best_acc and val_loss < best_loss):
            best, best_epoch, best_acc, best_loss = params.copy(), epoch, val_acc, val_loss
            waited = 0
        else:
            waited += 1
            if waited > cfg.patience:
                logger.debug(f"Early stop at epoch {epoch} (best epoch {best_epoch})")
                break

    result = TrainResult(
        best_params=best, best_epoch=best_epoch, prop=prop,
        history=history, train_seconds=time.perf_counter() - start,
    )
    logger.info(
        f"Trained {spec.label()} seed={cfg.seed}: {result.epochs} epochs, best epoch {best_epoch}, "
        f"best val acc {best_acc if has_val else float('nan'):.4f}, {result.train_seconds:.1f}s"
    )
    return result
