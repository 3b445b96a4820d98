from concurrent.futures import ThreadPoolExecutor
from datetime import datetime
from itertools import product
from pathlib import Path
from threading import Lock
from typing import Dict, Iterable, List, Optional, Tuple, Union

import numpy as np
import pandas as pd

from src.api.models import (
    AblationReport,
    AggregateStats,
    GridCell,
    GridReport,
    RunConfig,
    RunReport,
    SeedResult,
    TheoremReport,
    validate_run_config,
)
from src.core.errors import ConfigError, RegGcnError
from src.core.logging import get_logger
from src.framework.regularizers import FRAMEWORK_VARIANTS, RegularizerSpec, Variant, resolve_rank
from src.framework.verification import StationarityReport, verify_stationarity
from src.graph.construction import GraphOperators, build_graph_operators
from src.graph.dataset import Dataset, load_dataset, make_split
from src.network.checkpoint import load_checkpoint, save_checkpoint
from src.network.model import forward
from src.network.training import evaluate, prepare_propagation, train

logger = get_logger(__name__)

ABLATION_TOLERANCE = 0.005
EXACT_RANK = "exact"


def _timestamp() -> str:
    return datetime.now().strftime("%Y%m%dT%H%M%S%f")


def _respec(spec: RegularizerSpec, **updates) -> RegularizerSpec:
    return RegularizerSpec.model_validate({**spec.model_dump(), **updates})


class ExperimentService:
    """Runs training, grids, ablations and exports for one validated RunConfig."""

    def __init__(self, config: RunConfig):
        self.config = config
        self.output_dir = Path(config.output_dir)
        self._lock = Lock()
        self._dataset: Optional[Dataset] = None
        self._ops: Optional[GraphOperators] = None
        self._used_report_names: set = set()

    @property
    def dataset(self) -> Dataset:
        with self._lock:
            if self._dataset is None:
                cfg = self.config
                ds = load_dataset(
                    cfg.dataset.content, cfg.dataset.edges,
                    row_normalize_features=cfg.dataset.row_normalize,
                    strict_edges=cfg.dataset.strict_edges,
                    name=cfg.dataset_name,
                )
                self._dataset = make_split(
                    ds, cfg.split.per_class, cfg.split.n_val, cfg.split.n_test, cfg.split.seed
                )
            return self._dataset

    @property
    def ops(self) -> GraphOperators:
        ds = self.dataset
        with self._lock:
            if self._ops is None:
                self._ops = build_graph_operators(ds.adjacency, ds.features, k_sem=self.config.semantic.k)
            return self._ops

    def prepare(self) -> GraphOperators:
        """Load the dataset and build the shared graph operators."""
        return self.ops

    def _report_path(self, variant: str) -> Path:
        with self._lock:
            while True:
                name = f"{self.config.dataset_name}_{variant}_{_timestamp()}.report"
                if name not in self._used_report_names:
                    self._used_report_names.add(name)
                    return self.output_dir / name

    def run(self, spec: Optional[RegularizerSpec] = None, write: bool = True) -> RunReport:
        """Train `spec` over every repeat seed on the fixed split and aggregate test metrics."""
        spec = spec or self.config.spec
        ds, cfg = self.dataset, self.config
        prop = prepare_propagation(ds, spec, ops=self.ops, eig_config=cfg.eig.to_eig_config())

        seeds: List[SeedResult] = []
        for seed in cfg.repeat_seeds:
            result = train(ds, spec, cfg.train.model_copy(update={"seed": seed}), prop=prop)
            acc, f1 = evaluate(result.best_params, prop, ds, ds.test_idx) if ds.test_idx.size else (0.0, 0.0)
            val_acc = evaluate(result.best_params, prop, ds, ds.val_idx)[0] if ds.val_idx.size else None
            seeds.append(SeedResult(
                seed=seed, accuracy=acc, macro_f1=f1, val_accuracy=val_acc,
                epochs=result.epochs, best_epoch=result.best_epoch,
                wall_time=result.train_seconds, median_epoch_seconds=result.median_epoch_seconds,
            ))
            if cfg.save_checkpoint:
                save_checkpoint(
                    self.output_dir / f"{cfg.dataset_name}_{spec.label()}_seed{seed}.npz",
                    result.best_params, seed,
                    run_config=cfg.model_copy(update={"spec": spec}).model_dump(mode="json", exclude={"grid"}),
                    extra={"test_accuracy": acc, "test_macro_f1": f1},
                )

        report = RunReport(
            dataset=cfg.dataset_name,
            variant=spec.label(),
            config=cfg.model_copy(update={"spec": spec}).model_dump(mode="json"),
            operator=prop.descriptor,
            seeds=seeds,
            aggregate=AggregateStats.from_seeds(seeds),
        )
        logger.info(
            f"{report.dataset}/{report.variant}: acc {100 * report.aggregate.mean_accuracy:.1f} "
            f"({100 * report.aggregate.std_accuracy:.1f}), macro-F1 {100 * report.aggregate.mean_macro_f1:.1f}"
        )
        if write:
            path = report.write(self._report_path(report.variant))
            logger.info(f"Report written to {path}")
        return report

    def _grid_cell(self, alpha: float, beta: float, rank: Union[int, str]) -> GridCell:
        try:
            if str(rank) == EXACT_RANK:
                spec = _respec(self.config.spec, alpha=alpha, beta=beta, exact_inverse=True)
                resolved = self.dataset.num_nodes
            else:
                spec = _respec(self.config.spec, alpha=alpha, beta=beta, rank=rank, exact_inverse=False)
                resolved = resolve_rank(rank, self.dataset.num_features)
            report = self.run(spec)
            return GridCell(alpha=alpha, beta=beta, rank=rank, resolved_rank=resolved, status="ok", report=report)
        except (RegGcnError, ValueError) as e:
            logger.error(f"Grid cell alpha={alpha} beta={beta} rank={rank} failed: {e}")
            return GridCell(alpha=alpha, beta=beta, rank=rank, status="failed", error=str(e))

    def grid(
        self,
        alphas: Optional[List[float]] = None,
        betas: Optional[List[float]] = None,
        ranks: Optional[List[Union[int, str]]] = None,
    ) -> GridReport:
        """Cartesian grid over (alpha, beta, rank); failed cells are recorded and the grid goes on."""
        g = self.config.grid
        cells_in = list(product(alphas or g.alpha, betas or g.beta, ranks or g.rank))
        self.prepare()

        with ThreadPoolExecutor(max_workers=self.config.workers) as pool:
            cells = list(pool.map(lambda c: self._grid_cell(*c), cells_in))

        summary = grid_summary(cells)
        self.output_dir.mkdir(parents=True, exist_ok=True)
        summary_path = self.output_dir / f"{self.config.dataset_name}_grid_{_timestamp()}.csv"
        summary.to_csv(summary_path, index=False)
        warnings = rank_trend_warnings(cells)
        for w in warnings:
            logger.warning(w)
        return GridReport(
            dataset=self.config.dataset_name, cells=cells,
            summary_path=str(summary_path), warnings=warnings,
        )

    def ablate(self) -> AblationReport:
        """GCN, tsGCN-s, tsGCN-t, tsGCN(inv) and tsGCN on shared seeds and split."""
        base = self.config.spec
        if not base.is_tsgcn:
            base = RegularizerSpec(variant=Variant.TSGCN, rank=base.rank)
        tsgcn = _respec(base, variant=Variant.TSGCN, exact_inverse=False)
        columns_in: List[Tuple[str, RegularizerSpec]] = [
            ("gcn", RegularizerSpec(variant=Variant.GCN)),
            ("tsgcn_s", _respec(tsgcn, variant=Variant.TSGCN_S)),
            ("tsgcn_t", _respec(tsgcn, variant=Variant.TSGCN_T)),
            ("tsgcn_inv", _respec(tsgcn, exact_inverse=True)),
            ("tsgcn", tsgcn),
        ]
        self.prepare()

        with ThreadPoolExecutor(max_workers=self.config.workers) as pool:
            reports = list(pool.map(lambda item: self.run(item[1]), columns_in))
        columns: Dict[str, RunReport] = {name: rep for (name, _), rep in zip(columns_in, reports)}

        warnings = ablation_warnings(columns)
        for w in warnings:
            logger.warning(w)
        return AblationReport(dataset=self.config.dataset_name, columns=columns, warnings=warnings)

    def export_embeddings(self, checkpoint, layer: int, out_path=None) -> Path:
        params, meta = load_checkpoint(checkpoint)
        if not 1 <= layer <= params.n_layers:
            raise ConfigError([f"layer must be in [1, {params.n_layers}], got {layer}"])
        ds = self.dataset
        prop = prepare_propagation(ds, params.spec, ops=self.ops, eig_config=self.config.eig.to_eig_config())
        trace = forward(params, prop, ds.features)
        values = trace.activations[layer - 1]

        frame = pd.DataFrame(values, columns=[f"h{j}" for j in range(values.shape[1])])
        frame.insert(0, "label", [ds.class_names[c] for c in ds.labels])
        frame.insert(0, "node_id", list(ds.node_ids))
        out_path = Path(out_path or Path(checkpoint).with_suffix(f".layer{layer}.csv"))
        out_path.parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(out_path, index=False)
        logger.info(f"Exported layer {layer} embeddings ({values.shape[0]}x{values.shape[1]}) to {out_path}")
        return out_path

    @classmethod
    def from_checkpoint(cls, checkpoint) -> "ExperimentService":
        _, meta = load_checkpoint(checkpoint)
        if not meta.run_config:
            raise ConfigError([f"checkpoint {checkpoint} carries no run configuration"])
        return cls(validate_run_config(meta.run_config, Path(checkpoint).parent))


def grid_summary(cells: List[GridCell]) -> pd.DataFrame:
    rows = []
    for c in cells:
        agg = c.report.aggregate if c.report is not None else None
        rows.append({
            "alpha": c.alpha,
            "beta": c.beta,
            "rank": str(c.rank),
            "resolved_rank": c.resolved_rank,
            "status": c.status,
            "mean_accuracy": agg.mean_accuracy if agg else np.nan,
            "std_accuracy": agg.std_accuracy if agg else np.nan,
            "mean_macro_f1": agg.mean_macro_f1 if agg else np.nan,
            "std_macro_f1": agg.std_macro_f1 if agg else np.nan,
            "error": c.error or "",
        })
    return pd.DataFrame(rows)


def rank_trend_warnings(cells: List[GridCell]) -> List[str]:
    """Soft check: the lowest rank should not lose to the highest rank at the same (alpha, beta)."""
    warnings = []
    frame = grid_summary(cells)
    ok = frame[(frame.status == "ok") & frame.resolved_rank.notna()]
    for (alpha, beta), group in ok.groupby(["alpha", "beta"]):
        if group.resolved_rank.nunique() < 2:
            continue
        low = group.loc[group.resolved_rank.idxmin()]
        high = group.loc[group.resolved_rank.idxmax()]
        if low.mean_accuracy < high.mean_accuracy:
            warnings.append(
                f"rank trend: at alpha={alpha}, beta={beta} rank {int(low.resolved_rank)} reaches "
                f"{low.mean_accuracy:.4f} < {high.mean_accuracy:.4f} at rank {int(high.resolved_rank)}"
            )
    return warnings


def ablation_warnings(columns: Dict[str, RunReport]) -> List[str]:
    warnings = []
    best = columns["tsgcn"].aggregate.mean_accuracy
    for name in ("tsgcn_s", "tsgcn_t", "tsgcn_inv"):
        other = columns[name].aggregate.mean_accuracy
        if best < other - ABLATION_TOLERANCE:
            warnings.append(f"ablation: tsgcn {best:.4f} trails {name} {other:.4f} by more than 0.5 points")
    return warnings


def verify_theorems(
    variants: Optional[Iterable[Variant]] = None,
    seeds: Union[int, Iterable[int]] = 20,
    nodes_max: int = 32,
    perturb: float = 0.0,
) -> TheoremReport:
    """Stationarity check for every variant x seed; failures are collected, not raised."""
    variants = list(variants or FRAMEWORK_VARIANTS)
    seed_list = list(range(seeds)) if isinstance(seeds, int) else list(seeds)
    rows: List[StationarityReport] = []
    for variant in variants:
        spec = RegularizerSpec(variant=variant)
        for seed in seed_list:
            try:
                r = verify_stationarity(spec, seed=seed, perturb=perturb, nodes_max=nodes_max, raise_on_failure=False)
                rows.append(r)
            except RegGcnError as e:
                logger.error(f"Stationarity check {variant.value} seed={seed} errored: {e}")
                rows.append(StationarityReport(
                    variant=variant.value, seed=seed, n=0, discrepancy=None,
                    tolerance=0.0, passed=False, oracle="error", error=str(e),
                ))
    report = TheoremReport(rows=rows)
    failed = [r for r in rows if not r.passed]
    if failed:
        logger.error(f"{len(failed)} of {len(rows)} stationarity checks failed")
    else:
        logger.info(f"All {len(rows)} stationarity checks passed")
    return report
