import sys
from collections.abc import Iterable
from pathlib import Path

from departnet.config import RunConfig
from departnet_cli.utils import print_error

# Exit status for usage and input errors
USAGE_EXIT = 2


def missing_paths(paths: Iterable[Path]) -> list[Path]:
    return [path for path in paths if not path.exists()]


def require_paths(paths: Iterable[Path]) -> None:
    """Exit with the usage status when any path is missing, naming each one."""
    missing = missing_paths(paths)
    for path in missing:
        print_error(f"input file not found: {path}")
    if missing:
        sys.exit(USAGE_EXIT)


def require_inputs(run: RunConfig) -> None:
    require_paths([run.departures_path, run.weather_path, run.stops_path])


def require_stage_output(run: RunConfig, filename: str, stage: str) -> Path:
    """Path of an earlier stage's output, or exit naming the stage to run."""
    path = run.workdir / filename
    if not path.exists():
        print_error(f"{path} not found; run `departnet {stage}` first")
        sys.exit(USAGE_EXIT)
    return path
