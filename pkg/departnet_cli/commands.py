import sys
import time
from collections.abc import Callable, Sequence
from pathlib import Path
from typing import Any, TypeVar

from rich.progress import BarColumn, Progress, TextColumn, TimeElapsedColumn
from rich.table import Table

import departnet as dn
from departnet._api import MODEL_FILE, SEGMENTS_FILE
from departnet.exceptions import ConfigError, DepartnetError, SynthError
from departnet.nn import param_count
from departnet.report import ABLATION_FILE, EVALUATION_FILE, HISTORY_FILE
from departnet.training import EvalReport, select_optimal
from departnet_cli.io import (
    USAGE_EXIT,
    require_inputs,
    require_paths,
    require_stage_output,
)
from departnet_cli.utils import (
    console,
    format_count,
    format_seconds,
    print_error,
)

T = TypeVar("T")


def load_config(options: dict[str, Any], **overrides: Any) -> dn.RunConfig:
    """RunConfig from the global options plus command-level overrides."""
    try:
        return dn.load_run_config(
            options.get("config"), {**options.get("overrides", {}), **overrides}
        )
    except ConfigError as e:
        print_error(e)
        sys.exit(USAGE_EXIT)


def _run_stage(label: str, func: Callable[..., T], *args: Any, **kwargs: Any) -> T:
    """Run one stage under a spinner; library errors exit 1, usage errors 2."""
    try:
        with Progress(
            TextColumn(f"[bold blue]{label}..."),
            BarColumn(),
            TimeElapsedColumn(),
            console=console,
            transient=True,
        ) as progress:
            progress.add_task("", total=None)
            return func(*args, **kwargs)
    except (ConfigError, SynthError) as e:
        print_error(e)
        sys.exit(USAGE_EXIT)
    except DepartnetError as e:
        print_error(e)
        sys.exit(1)


def _table(title: str, *columns: str) -> Table:
    table = Table(
        title=title,
        title_style="bold green",
        header_style="bold cyan",
        border_style="dim",
    )
    for i, column in enumerate(columns):
        table.add_column(column, justify="left" if i == 0 else "right")
    return table


def _print_files(files: Sequence[Path]) -> None:
    for path in files:
        console.print(f"[dim]Wrote {path}[/dim]")


def synth_command(config: dn.SynthConfig, workdir: Path) -> None:
    """Handle synth command logic."""
    start = time.time()
    result = _run_stage("Generating synthetic dataset", dn.run_synth, config, workdir)

    table = _table("Synthetic Dataset", "Setting", "Value")
    table.add_row("process", config.process)
    table.add_row("routes", str(config.n_routes))
    table.add_row("trips", format_count(config.n_trips))
    table.add_row("stops per trip", f"{config.stops_min}-{config.stops_max}")
    table.add_row("noise σ", f"{config.noise_std:.2f} s")
    table.add_row("seed", str(config.seed))
    console.print(table)
    _print_files(result.files)
    console.print(f"[dim]Finished in {time.time() - start:.1f}s[/dim]\n")


def preprocess_command(run: dn.RunConfig) -> None:
    """Handle preprocess command logic."""
    require_inputs(run)
    result = _run_stage("Preprocessing departures", dn.run_preprocess, run)

    stats = result.stats
    table = _table("Deviation Statistics", "Statistic", "Value")
    table.add_row("mean (M)", format_seconds(stats.mean, 3))
    table.add_row("std dev (σ)", f"{stats.std_dev:.3f} s")
    table.add_row("k", f"{stats.k:g}")
    table.add_row("low threshold", format_seconds(stats.low, 3))
    table.add_row("high threshold", format_seconds(stats.high, 3))
    console.print(table)

    summary = result.summary
    counts = _table("Dataset", "Count", "Value")
    counts.add_row("rows read", format_count(result.rows_in))
    counts.add_row("valid records", format_count(result.records))
    counts.add_row("rejected rows", format_count(result.rejects))
    counts.add_row("weather rejects", format_count(result.weather_rejects))
    counts.add_row(
        "outliers dropped" if run.outlier_filter else "outlier filter",
        format_count(result.dropped) if run.outlier_filter else "off",
    )
    counts.add_row("departures kept", format_count(summary.n))
    counts.add_row("trips", format_count(result.trips))
    counts.add_row("routes", format_count(summary.routes))
    counts.add_row("stops", format_count(summary.stops))
    counts.add_row("segments", format_count(result.segments))
    counts.add_row("delayed share", f"{summary.delayed_fraction:.1%}")
    counts.add_row(
        "deviation range",
        f"{summary.min_deviation:,.0f} … {summary.max_deviation:,.0f} s",
    )
    console.print(counts)
    _print_files(result.files)


def _print_evaluation(evaluation: EvalReport) -> None:
    table = _table("Test Evaluation", "Metric", "Value")
    table.add_row("examples", format_count(evaluation.n_test))
    table.add_row("RMSE", f"{evaluation.rmse:.4f} s")
    table.add_row("MAE", f"{evaluation.mae:.4f} s")
    mape = "undefined" if evaluation.mape is None else f"{evaluation.mape:.2f} %"
    table.add_row("MAPE", mape)
    table.add_row("MAPE zeros excluded", format_count(evaluation.mape_excluded))
    table.add_row("predict-zero RMSE", f"{evaluation.baseline_rmse:.4f} s")
    console.print(table)


def train_command(run: dn.RunConfig) -> None:
    """Handle train command logic."""
    require_stage_output(run, SEGMENTS_FILE, "preprocess")
    require_inputs(run)
    result = _run_stage(f"Training {run.spec or 'linear'}", dn.run_train, run)

    console.print(
        f"[green]✓[/green] Trained [bold]{result.spec.label}[/bold] "
        f"({format_count(param_count(result.spec))} parameters) on "
        f"{'/'.join(format_count(n) for n in result.split_sizes)} "
        "train/val/test segments"
    )
    history = _table("Training History", "Epoch", "Train MSE", "Val MSE")
    for row in result.history:
        val = "n/a" if row.val_mse is None else f"{row.val_mse:.4f}"
        history.add_row(str(row.epoch), f"{row.train_mse:.4f}", val)
    console.print(history)
    _print_evaluation(result.evaluation)
    _print_files(result.files)


def ablate_command(run: dn.RunConfig, hidden_layers: Sequence[str]) -> None:
    """Handle ablate command logic."""
    require_stage_output(run, SEGMENTS_FILE, "preprocess")
    require_inputs(run)
    rows = _run_stage("Training architectures", dn.run_ablate, run, hidden_layers)

    chosen = select_optimal(rows)
    table = _table(
        "Architecture Ablation",
        "Hidden layers",
        "Params",
        "MACs",
        "MACs×1000",
        "Val RMSE",
        "Test RMSE",
    )
    for row in rows:
        marker = " [green]★[/green]" if row is chosen else ""
        val = "n/a" if row.val_rmse is None else f"{row.val_rmse:.4f}"
        table.add_row(
            row.spec.hidden_label + marker,
            format_count(row.params),
            format_count(row.macs),
            format_count(row.flops),
            val,
            f"{row.test_rmse:.4f}",
        )
    console.print(table)
    console.print(
        "[dim]★ smallest model within 1.5% of the best validation RMSE[/dim]"
    )
    _print_files([run.workdir / ABLATION_FILE])


def predict_command(run: dn.RunConfig, query: Path, model: Path | None) -> None:
    """Handle predict command logic."""
    model_path = model or require_stage_output(run, MODEL_FILE, "train")
    require_paths([query, model_path])
    require_inputs(run)
    result = _run_stage(
        "Predicting departures", dn.run_predict, run, query, model_path
    )

    table = _table(
        "Predicted Departures",
        "Route",
        "Next stop",
        "Scheduled",
        "Deviation",
        "Predicted",
    )
    for _, p in result.predictions:
        table.add_row(
            p.route_id,
            p.next_stop_id,
            p.scheduled_time.isoformat(sep=" "),
            format_seconds(p.deviation),
            p.predicted_time.isoformat(sep=" "),
        )
    console.print(table)

    for failure in result.failures:
        console.print(
            f"[yellow]⚠[/yellow] Row {failure.row} "
            f"({failure.key[0]} #{failure.key[1]}): {failure.error}"
        )
    console.print(f"Mean inference latency: {result.latency_us:.1f} µs per sample")
    _print_files([result.path])

    if result.failures and not result.predictions:
        print_error("every query row failed")
        sys.exit(1)


def report_command(run: dn.RunConfig, out: Path | None) -> None:
    """Handle report command logic."""
    require_stage_output(run, EVALUATION_FILE, "train")
    require_stage_output(run, HISTORY_FILE, "train")
    bundle = _run_stage("Writing report", dn.run_report, run, out)

    console.print(
        f"[green]✓[/green] Report bundle with [bold]{len(bundle.files)}[/bold] "
        f"files in {bundle.directory}"
    )
    _print_files(bundle.files)
