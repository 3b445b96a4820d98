import functools
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional

import typer
from rich.console import Console
from rich.table import Table

from src.api.models import AblationReport, GridReport, RunReport, TheoremReport, load_run_config
from src.core.config import settings
from src.core.errors import ConfigError, RegGcnError
from src.core.logging import get_logger
from src.framework.regularizers import FRAMEWORK_VARIANTS, Variant
from src.services.experiment_service import ExperimentService, verify_theorems

logger = get_logger(__name__)
console = Console()

app = typer.Typer(
    name="reglgcn",
    help="Regularizer-centered GCN variants, tsGCN with low-rank Woodbury propagation, and experiment tooling.",
    no_args_is_help=True,
    add_completion=False,
)

ConfigOpt = typer.Option(..., "--config", "-c", help="YAML run config")
AlphaOpt = typer.Option(None, "--alpha", help="Override spec.alpha")
BetaOpt = typer.Option(None, "--beta", help="Override spec.beta")
RankOpt = typer.Option(None, "--rank", help="Override spec.rank (int or d/2^k)")
VariantOpt = typer.Option(None, "--variant", help="Override spec.variant")
SeedOpt = typer.Option(None, "--seed", help="Run a single seed instead of repeat_seeds")


def handle_errors(fn: Callable) -> Callable:
    """Map library errors to exit codes: 1 config, 2 numeric, 3 theorem."""
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ConfigError as e:
            for violation in e.violations:
                console.print(f"[red]config error:[/red] {violation}")
            logger.error(f"Configuration rejected with {len(e.violations)} violation(s)")
            raise typer.Exit(code=e.exit_code)
        except RegGcnError as e:
            console.print(f"[red]{type(e).__name__}:[/red] {e}")
            logger.error(f"{type(e).__name__}: {e}")
            raise typer.Exit(code=e.exit_code)
    return wrapper


def _overrides(
    alpha: Optional[float],
    beta: Optional[float],
    rank: Optional[str],
    variant: Optional[str],
    seed: Optional[int],
) -> Dict[str, Any]:
    return {
        "spec.alpha": alpha,
        "spec.beta": beta,
        "spec.rank": int(rank) if rank is not None and rank.strip().isdigit() else rank,
        "spec.variant": variant,
        "repeat_seeds": [seed] if seed is not None else None,
    }


def _parse_list(raw: Optional[str], cast: Callable = float) -> Optional[List[Any]]:
    if not raw:
        return None
    items = [s.strip() for s in raw.split(',') if s.strip()]
    return [cast(s) for s in items]


def _rank_item(s: str):
    return int(s) if s.isdigit() else s


def _print_run(report: RunReport) -> None:
    table = Table(title=f"{report.dataset} / {report.variant}")
    for col in ("seed", "test acc", "macro-F1", "epochs", "best epoch", "seconds"):
        table.add_column(col, justify="right")
    for s in report.seeds:
        table.add_row(
            str(s.seed), f"{100 * s.accuracy:.2f}", f"{100 * s.macro_f1:.2f}",
            str(s.epochs), str(s.best_epoch), f"{s.wall_time:.2f}",
        )
    agg = report.aggregate
    table.add_row(
        "mean (std)",
        f"{100 * agg.mean_accuracy:.1f} ({100 * agg.std_accuracy:.1f})",
        f"{100 * agg.mean_macro_f1:.1f} ({100 * agg.std_macro_f1:.1f})",
        "", "", "", style="bold",
    )
    console.print(table)


def _print_grid(report: GridReport) -> None:
    table = Table(title=f"{report.dataset} grid")
    for col in ("alpha", "beta", "rank", "status", "acc", "macro-F1"):
        table.add_column(col, justify="right")
    for c in report.cells:
        agg = c.report.aggregate if c.report else None
        table.add_row(
            f"{c.alpha:g}", f"{c.beta:g}", str(c.rank), c.status,
            f"{100 * agg.mean_accuracy:.1f}" if agg else "-",
            f"{100 * agg.mean_macro_f1:.1f}" if agg else "-",
        )
    console.print(table)
    console.print(f"summary: {report.summary_path}")


def _print_ablation(report: AblationReport) -> None:
    table = Table(title=f"{report.dataset} ablation")
    table.add_column("metric")
    for name in report.columns:
        table.add_column(name, justify="right")
    acc = [f"{100 * r.aggregate.mean_accuracy:.1f} ({100 * r.aggregate.std_accuracy:.1f})" for r in report.columns.values()]
    f1 = [f"{100 * r.aggregate.mean_macro_f1:.1f} ({100 * r.aggregate.std_macro_f1:.1f})" for r in report.columns.values()]
    table.add_row("accuracy", *acc)
    table.add_row("macro-F1", *f1)
    console.print(table)


def _print_theorems(report: TheoremReport) -> None:
    table = Table(title="stationarity checks")
    for col in ("variant", "passed", "max discrepancy", "max truncation gap"):
        table.add_column(col, justify="right")
    by_variant: Dict[str, list] = {}
    for row in report.rows:
        by_variant.setdefault(row.variant, []).append(row)
    for variant, rows in by_variant.items():
        passed = sum(r.passed for r in rows)
        discrepancies = [r.discrepancy for r in rows if r.discrepancy is not None]
        gaps = [r.truncation_gap for r in rows if r.truncation_gap is not None]
        table.add_row(
            variant,
            f"[{'green' if passed == len(rows) else 'red'}]{passed}/{len(rows)}[/]",
            f"{max(discrepancies):.2e}" if discrepancies else "-",
            f"{max(gaps):.2e}" if gaps else "-",
        )
    console.print(table)


@app.command()
@handle_errors
def train(
    config: Path = ConfigOpt,
    alpha: Optional[float] = AlphaOpt,
    beta: Optional[float] = BetaOpt,
    rank: Optional[str] = RankOpt,
    variant: Optional[str] = VariantOpt,
    seed: Optional[int] = SeedOpt,
):
    """Train one variant over the configured seeds and write a report."""
    cfg = load_run_config(config, _overrides(alpha, beta, rank, variant, seed))
    service = ExperimentService(cfg)
    report = service.run()
    _print_run(report)
    if cfg.export_layer is not None and cfg.save_checkpoint:
        ckpt = service.output_dir / f"{cfg.dataset_name}_{report.variant}_seed{cfg.repeat_seeds[0]}.npz"
        service.export_embeddings(ckpt, cfg.export_layer)


@app.command()
@handle_errors
def grid(
    config: Path = ConfigOpt,
    alpha_grid: Optional[str] = typer.Option(None, "--alpha-grid", help="Comma-separated alpha values"),
    beta_grid: Optional[str] = typer.Option(None, "--beta-grid", help="Comma-separated beta values"),
    rank_grid: Optional[str] = typer.Option(None, "--rank-grid", help="Comma-separated ranks, d/2^k or 'exact'"),
    alpha: Optional[float] = AlphaOpt,
    beta: Optional[float] = BetaOpt,
    rank: Optional[str] = RankOpt,
    variant: Optional[str] = VariantOpt,
    seed: Optional[int] = SeedOpt,
):
    """Cartesian sweep over (alpha, beta, rank) with a CSV summary."""
    cfg = load_run_config(config, _overrides(alpha, beta, rank, variant, seed))
    report = ExperimentService(cfg).grid(
        _parse_list(alpha_grid), _parse_list(beta_grid), _parse_list(rank_grid, _rank_item),
    )
    _print_grid(report)
    for w in report.warnings:
        console.print(f"[yellow]warning:[/yellow] {w}")


@app.command()
@handle_errors
def ablate(
    config: Path = ConfigOpt,
    alpha: Optional[float] = AlphaOpt,
    beta: Optional[float] = BetaOpt,
    rank: Optional[str] = RankOpt,
    variant: Optional[str] = VariantOpt,
    seed: Optional[int] = SeedOpt,
):
    """GCN, tsGCN-s, tsGCN-t, tsGCN(inv) and tsGCN side by side."""
    cfg = load_run_config(config, _overrides(alpha, beta, rank, variant, seed))
    report = ExperimentService(cfg).ablate()
    _print_ablation(report)
    for w in report.warnings:
        console.print(f"[yellow]warning:[/yellow] {w}")


@app.command("verify-theorems")
@handle_errors
def verify_theorems_cmd(
    variant: str = typer.Option("all", "--variant", help="'all' or one variant name"),
    seeds: int = typer.Option(20, "--seeds", min=1, help="Random instances per variant"),
    nodes_max: int = typer.Option(32, "--nodes-max", min=6, max=64, help="Largest random graph"),
    output_dir: Optional[Path] = typer.Option(None, "--output-dir"),
    config: Optional[Path] = typer.Option(None, "--config", "-c", help="Only output_dir is read from it"),
    inject_fault: float = typer.Option(0.0, "--inject-fault", hidden=True),
):
    """Check every closed-form propagation against the dense stationarity solve."""
    if output_dir is None:
        output_dir = Path(load_run_config(config).output_dir if config else settings.REGLGCN_OUTPUT_DIR)
    if variant == "all":
        variants = list(FRAMEWORK_VARIANTS)
    else:
        try:
            variants = [Variant(variant)]
        except ValueError:
            raise ConfigError([f"unknown variant {variant!r}; choose from {[v.value for v in Variant]}"])
    report = verify_theorems(variants, seeds=seeds, nodes_max=nodes_max, perturb=inject_fault)
    _print_theorems(report)
    path = report.write(output_dir / f"theorems_{report.created_at.replace(':', '')}.report")
    console.print(f"report: {path}")
    if not report.passed:
        raise typer.Exit(code=3)


@app.command("export-embeddings")
@handle_errors
def export_embeddings(
    checkpoint: Path = typer.Option(..., "--checkpoint", exists=True, dir_okay=False),
    layer: int = typer.Option(..., "--layer", help="1-based layer index"),
    output: Optional[Path] = typer.Option(None, "--output", "-o"),
    config: Optional[Path] = typer.Option(None, "--config", "-c"),
):
    """Write one layer's activations with node ids and labels as CSV."""
    if config is not None:
        service = ExperimentService(load_run_config(config))
    else:
        service = ExperimentService.from_checkpoint(checkpoint)
    path = service.export_embeddings(checkpoint, layer, output)
    console.print(f"embeddings: {path}")


if __name__ == "__main__":
    app()
