from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np
from pydantic import BaseModel, Field, ValidationError

from src import __version__
from src.core.config import load_yaml_tree, resolve_data_path, set_dotted, settings
from src.core.errors import ConfigError, RegGcnError
from src.framework.regularizers import RegularizerSpec, resolve_rank
from src.framework.verification import StationarityReport
from src.lowrank.eigensolver import EigConfig
from src.network.training import TrainConfig


class DatasetConfig(BaseModel):
    name: Optional[str] = None
    content: str
    edges: str
    row_normalize: bool = True
    strict_edges: bool = True


class SplitConfig(BaseModel):
    per_class: int = Field(20, ge=0)
    n_val: int = Field(500, ge=0)
    n_test: int = Field(1000, ge=0)
    seed: int = 0


class SemanticConfig(BaseModel):
    k: int = Field(10, ge=1)


class EigSettings(BaseModel):
    tol: float = Field(settings.DEFAULT_EIG_TOL, gt=0)
    max_iter: int = Field(settings.DEFAULT_EIG_MAX_ITER, ge=1)
    seed: int = 0
    oversample: int = Field(8, ge=0)
    strict: bool = True

    def to_eig_config(self) -> EigConfig:
        return EigConfig(
            tol=self.tol, max_iter=self.max_iter, seed=self.seed,
            oversample=self.oversample, strict=self.strict,
        )


class GridConfig(BaseModel):
    alpha: List[float] = Field(default_factory=lambda: [round(0.1 * i, 1) for i in range(1, 11)])
    beta: List[float] = Field(default_factory=lambda: [round(0.1 * i, 1) for i in range(1, 11)])
    rank: List[Union[int, str]] = Field(default_factory=lambda: [f"d/2^{k}" for k in range(11, 2, -1)])


class RunConfig(BaseModel):
    dataset: DatasetConfig
    split: SplitConfig = Field(default_factory=SplitConfig)
    semantic: SemanticConfig = Field(default_factory=SemanticConfig)
    spec: RegularizerSpec = Field(default_factory=RegularizerSpec)
    eig: EigSettings = Field(default_factory=EigSettings)
    train: TrainConfig = Field(default_factory=TrainConfig)
    output_dir: str = settings.REGLGCN_OUTPUT_DIR
    repeat_seeds: List[int] = Field(default_factory=lambda: list(range(10)))
    save_checkpoint: bool = False
    export_layer: Optional[int] = None
    workers: int = Field(1, ge=1)
    grid: GridConfig = Field(default_factory=GridConfig)

    @property
    def dataset_name(self) -> str:
        return self.dataset.name or Path(self.dataset.content).stem


def _feature_dim(content: Path) -> Optional[int]:
    with open(content, 'r', encoding='utf-8') as fh:
        for line in fh:
            parts = line.split('\t') if '\t' in line else line.split()
            if len(parts) >= 3:
                return len(parts) - 2
    return None


def load_run_config(path, overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
    """Parse, override and validate a YAML run config; every violation is reported at once."""
    path = Path(path)
    tree = load_yaml_tree(path)
    for key, value in (overrides or {}).items():
        if value is not None:
            set_dotted(tree, key, value)
    return validate_run_config(tree, path.parent)


def validate_run_config(tree: Dict[str, Any], config_dir: Path) -> RunConfig:
    try:
        cfg = RunConfig.model_validate(tree)
    except ValidationError as e:
        raise ConfigError(
            f"{'.'.join(str(p) for p in err['loc']) or '<root>'}: {err['msg']}" for err in e.errors()
        )

    violations: List[str] = []
    resolved = {}
    for key in ("content", "edges"):
        p = resolve_data_path(getattr(cfg.dataset, key), config_dir)
        if not p.exists():
            violations.append(f"dataset.{key}: file not found ({p})")
        resolved[key] = str(p)

    if Path(resolved["content"]).exists() and cfg.spec.is_tsgcn and not cfg.spec.exact_inverse:
        d = _feature_dim(Path(resolved["content"]))
        ranks = [cfg.spec.rank]
        if "rank" in (tree.get("grid") or {}):
            ranks += [r for r in cfg.grid.rank if str(r) != "exact"]
        for rank in ranks:
            try:
                resolve_rank(rank, d or 0)
            except RegGcnError as e:
                violations.append(f"rank: {e}")
    if cfg.export_layer is not None and not 1 <= cfg.export_layer <= cfg.train.n_layers:
        violations.append(f"export_layer must be in [1, {cfg.train.n_layers}], got {cfg.export_layer}")
    if not cfg.repeat_seeds:
        violations.append("repeat_seeds must list at least one seed")
    if violations:
        raise ConfigError(violations)

    dataset = cfg.dataset.model_copy(update=resolved)
    return cfg.model_copy(update={"dataset": dataset})


class SeedResult(BaseModel):
    seed: int
    accuracy: float
    macro_f1: float
    val_accuracy: Optional[float] = None
    epochs: int
    best_epoch: int
    wall_time: float
    median_epoch_seconds: float


class AggregateStats(BaseModel):
    mean_accuracy: float
    std_accuracy: float
    mean_macro_f1: float
    std_macro_f1: float

    @classmethod
    def from_seeds(cls, seeds: List[SeedResult]) -> "AggregateStats":
        acc = np.array([s.accuracy for s in seeds])
        f1 = np.array([s.macro_f1 for s in seeds])
        return cls(
            mean_accuracy=float(acc.mean()), std_accuracy=float(acc.std()),
            mean_macro_f1=float(f1.mean()), std_macro_f1=float(f1.std()),
        )


class RunReport(BaseModel):
    dataset: str
    variant: str
    created_at: str = Field(default_factory=lambda: datetime.now().isoformat(timespec="seconds"))
    library_version: str = __version__
    config: Dict[str, Any]
    operator: Dict[str, Any] = Field(default_factory=dict)
    seeds: List[SeedResult]
    aggregate: AggregateStats
    warnings: List[str] = Field(default_factory=list)

    def write(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.model_dump_json(indent=2), encoding='utf-8')
        return path

    @classmethod
    def read(cls, path) -> "RunReport":
        return cls.model_validate_json(Path(path).read_text(encoding='utf-8'))


class GridCell(BaseModel):
    alpha: float
    beta: float
    rank: Union[int, str]
    resolved_rank: Optional[int] = None
    status: str
    error: Optional[str] = None
    report_path: Optional[str] = None
    report: Optional[RunReport] = None


class GridReport(BaseModel):
    dataset: str
    cells: List[GridCell]
    summary_path: Optional[str] = None
    warnings: List[str] = Field(default_factory=list)


class AblationReport(BaseModel):
    dataset: str
    columns: Dict[str, RunReport]
    warnings: List[str] = Field(default_factory=list)


class TheoremReport(BaseModel):
    created_at: str = Field(default_factory=lambda: datetime.now().isoformat(timespec="seconds"))
    library_version: str = __version__
    rows: List[StationarityReport]

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)

    def write(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.model_dump_json(indent=2), encoding='utf-8')
        return path
