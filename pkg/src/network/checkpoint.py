"""Checkpoints: an npz with one array per layer and a JSON metadata record."""

from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field, ValidationError

from src.core.errors import InputError
from src.core.logging import get_logger
from src.framework.regularizers import RegularizerSpec
from src.network.model import ModelParams

logger = get_logger(__name__)

CHECKPOINT_VERSION = 1


class CheckpointMeta(BaseModel):
    version: int = CHECKPOINT_VERSION
    spec: RegularizerSpec
    seed: int
    dims: List[int]
    step: int = 0
    run_config: Dict[str, Any] = Field(default_factory=dict)
    extra: Dict[str, Any] = Field(default_factory=dict)


def save_checkpoint(
    path,
    params: ModelParams,
    seed: int,
    run_config: Optional[Dict[str, Any]] = None,
    extra: Optional[Dict[str, Any]] = None,
) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    meta = CheckpointMeta(
        spec=params.spec,
        seed=seed,
        dims=list(params.dims),
        step=params.step,
        run_config=run_config or {},
        extra=extra or {},
    )
    arrays = {f"theta_{l}": t for l, t in enumerate(params.thetas)}
    with open(path, "wb") as fh:
        np.savez(fh, meta=np.array(meta.model_dump_json()), **arrays)
    logger.info(f"Checkpoint written to {path}")
    return path


def load_checkpoint(path) -> Tuple[ModelParams, CheckpointMeta]:
    path = Path(path)
    if not path.exists():
        raise InputError(f"checkpoint not found: {path}")
    with np.load(path, allow_pickle=False) as data:
        try:
            meta = CheckpointMeta.model_validate_json(str(data["meta"]))
        except ValidationError as e:
            raise InputError(f"checkpoint metadata in {path} is malformed: {e.error_count()} error(s)")
        if meta.version != CHECKPOINT_VERSION:
            raise InputError(f"unsupported checkpoint version {meta.version!r} in {path}")
        n_layers = len(meta.dims) - 1
        thetas = [np.array(data[f"theta_{l}"], dtype=np.float64) for l in range(n_layers)]
    params = ModelParams(
        thetas=thetas,
        spec=meta.spec,
        first_moments=[np.zeros_like(t) for t in thetas],
        second_moments=[np.zeros_like(t) for t in thetas],
        step=meta.step,
    )
    return params, meta
