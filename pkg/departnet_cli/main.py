import signal
import sys
import threading
from pathlib import Path
from typing import Any

import click

from departnet.exceptions import SynthError
from departnet.presets import PRESET_REGISTRY
from departnet.synth import PROCESSES, SynthConfig
from departnet_cli.commands import (
    ablate_command,
    load_config,
    predict_command,
    preprocess_command,
    report_command,
    synth_command,
    train_command,
)
from departnet_cli.io import USAGE_EXIT
from departnet_cli.utils import print_error, setup_logging


@click.group()
@click.version_option(prog_name="departnet")
@click.option(
    "--config",
    "config_path",
    type=click.Path(dir_okay=False, path_type=Path),
    help="Flat key = value run configuration file",
)
@click.option("--seed", type=int, help="Run seed shared by every stage")
@click.option(
    "--threads", type=click.IntRange(min=0), help="Worker threads (0 = all cores)"
)
@click.option(
    "--workdir",
    type=click.Path(file_okay=False, path_type=Path),
    help="Directory for stage inputs and outputs",
)
@click.option("-v", "--verbose", is_flag=True, help="Enable debug logging")
@click.pass_context
def cli(
    ctx: click.Context,
    config_path: Path | None,
    seed: int | None,
    threads: int | None,
    workdir: Path | None,
    verbose: bool,
) -> None:
    """
    Departnet: next-stop bus departure deviation prediction.

    Examples:
      departnet --workdir run synth --n-trips 3000 --process nonlinear
      departnet --workdir run preprocess
      departnet --workdir run train --spec 512,128,64
      departnet --workdir run ablate
      departnet --workdir run predict queries.csv
      departnet --workdir run report
    """
    setup_logging(verbose)
    ctx.obj = {
        "config": config_path,
        "overrides": {"seed": seed, "threads": threads, "workdir": workdir},
    }


def _overrides(options: dict[str, Any]) -> dict[str, Any]:
    return {k: v for k, v in options.items() if v is not None}


@cli.command(name="preprocess")
@click.option("--departures", type=click.Path(path_type=Path), help="Departures file")
@click.option("--weather", type=click.Path(path_type=Path), help="Hourly weather file")
@click.option("--stops", type=click.Path(path_type=Path), help="Stop locations file")
@click.option("-k", "k", type=float, help="Outlier band half-width in σ (default 2)")
@click.option(
    "--outlier-filter/--no-outlier-filter",
    default=None,
    help="Drop deviations outside mean ± k·σ",
)
@click.pass_obj
def preprocess_cmd(obj: dict[str, Any], **options: Any) -> None:
    """
    Parse the inputs, remove outliers and write the segments file.

    Prints the outlier thresholds and the dataset counts.
    """
    preprocess_command(load_config(obj, **_overrides(options)))


@cli.command(name="train")
@click.option("--spec", help='Hidden layer sizes, e.g. "512,128,64" or "linear"')
@click.option("--epochs", type=int, help="Training epochs (default 10)")
@click.option("--learning-rate", type=float, help="Adam learning rate (default 0.01)")
@click.option("--batch-size", type=int, help="Mini-batch size (default 1000)")
@click.option(
    "--split-mode",
    type=click.Choice(["segment", "trip"]),
    help="Split individual segments or whole trips",
)
@click.pass_obj
def train_cmd(obj: dict[str, Any], **options: Any) -> None:
    """
    Train one network on the segments file and evaluate it on the test split.
    """
    train_command(load_config(obj, **_overrides(options)))


@cli.command(name="ablate")
@click.option(
    "--spec",
    "specs",
    multiple=True,
    help="Hidden layer sizes to compare (repeatable); default is the preset",
)
@click.option(
    "--preset",
    "ablation_preset",
    type=click.Choice(sorted(PRESET_REGISTRY)),
    help="Architecture preset (default ablation)",
)
@click.option("--epochs", type=int, help="Training epochs (default 10)")
@click.option("--batch-size", type=int, help="Mini-batch size (default 1000)")
@click.pass_obj
def ablate_cmd(obj: dict[str, Any], specs: tuple[str, ...], **options: Any) -> None:
    """Train several architectures on one split and compare them."""
    ablate_command(load_config(obj, **_overrides(options)), list(specs))


@cli.command(name="predict")
@click.argument("query", type=click.Path(dir_okay=False, path_type=Path))
@click.option(
    "--model",
    type=click.Path(dir_okay=False, path_type=Path),
    help="Model artifact (default <workdir>/model.json)",
)
@click.pass_obj
def predict_cmd(obj: dict[str, Any], query: Path, model: Path | None) -> None:
    """
    Predict next-stop departure times for the segments in QUERY.

    QUERY uses the segments file layout with the next stop's actual time
    left empty.
    """
    predict_command(load_config(obj), query, model)


@cli.command(name="synth")
@click.option("--n-routes", type=int, default=8, show_default=True)
@click.option("--n-trips", type=int, default=1000, show_default=True)
@click.option("--stops-min", type=int, default=2, show_default=True)
@click.option("--stops-max", type=int, default=14, show_default=True)
@click.option("--noise-std", type=float, default=30.0, show_default=True)
@click.option(
    "--process", type=click.Choice(PROCESSES), default="linear", show_default=True
)
@click.pass_obj
def synth_cmd(
    obj: dict[str, Any],
    n_routes: int,
    n_trips: int,
    stops_min: int,
    stops_max: int,
    noise_std: float,
    process: str,
) -> None:
    """Write a synthetic dataset with known ground truth into the workdir."""
    run = load_config(obj)
    try:
        config = SynthConfig(
            n_routes=n_routes,
            stops_min=stops_min,
            stops_max=stops_max,
            n_trips=n_trips,
            noise_std=noise_std,
            seed=run.seed,
            process=process,
        )
    except SynthError as e:
        print_error(e)
        sys.exit(USAGE_EXIT)
    synth_command(config, run.workdir)


@cli.command(name="report")
@click.option(
    "--out",
    type=click.Path(file_okay=False, path_type=Path),
    help="Bundle directory (default <workdir>/report)",
)
@click.pass_obj
def report_cmd(obj: dict[str, Any], out: Path | None) -> None:
    """Rebuild the report bundle from the train, ablate and preprocess outputs."""
    report_command(load_config(obj), out)


def signal_handler(sig, frame):
    sys.exit(1)


def main():
    signal.signal(signal.SIGINT, signal_handler)
    status: list[int] = []

    def _run() -> None:
        try:
            cli.main(prog_name="departnet")
        except SystemExit as e:
            code = e.code
            status.append(code if isinstance(code, int) else (0 if code is None else 1))

    # Run in a daemon thread for responsive interruption
    main_thread = threading.Thread(target=_run)
    main_thread.daemon = True
    main_thread.start()

    while main_thread.is_alive():
        main_thread.join(timeout=0.1)

    sys.exit(status[0] if status else 1)


if __name__ == "__main__":
    main()
