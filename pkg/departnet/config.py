"""
Run configuration shared by every pipeline stage.

A config file is flat ``key = value`` text; ``#`` starts a comment.
Values resolve as explicit overrides > config file > defaults.
"""

import dataclasses
import logging
import os
from collections.abc import Mapping
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from departnet.exceptions import ConfigError, ShapeError, TrainingError
from departnet.features import DEFAULT_FAR_THRESHOLD_M, LAYOUTS, CoordinateMode
from departnet.nn import NetworkSpec
from departnet.presets import OPTIMAL_HIDDEN, PRESET_REGISTRY
from departnet.preprocess import DEFAULT_K
from departnet.training import SPLIT_MODES, TrainConfig

logger = logging.getLogger(__name__)

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


@dataclass(frozen=True)
class RunConfig:
    """
    Attributes:
        departures, weather, stops: Input files; unset means
            ``<workdir>/departures.csv`` and so on
        workdir: Directory holding every stage's inputs and outputs
        spec: Hidden layer sizes for ``train`` (e.g. "512,128,64")
        ablation_preset: Architecture preset for ``ablate``
        threads: Encoder worker threads; 0 means one per core
    """

    departures: Path | None = None
    weather: Path | None = None
    stops: Path | None = None
    workdir: Path = Path("work")
    delimiter: str = ","
    k: float = DEFAULT_K
    outlier_filter: bool = True
    far_threshold_m: float = DEFAULT_FAR_THRESHOLD_M
    coordinate_mode: str = CoordinateMode.GEODETIC.value
    schema_version: str = "1"
    epochs: int = 10
    learning_rate: float = 0.01
    batch_size: int = 1000
    seed: int = 0
    split_train: float = 0.7
    split_val: float = 0.2
    split_test: float = 0.1
    split_mode: str = "segment"
    spec: str = ",".join(str(h) for h in OPTIMAL_HIDDEN)
    ablation_preset: str = "ablation"
    threads: int = 0

    def __post_init__(self) -> None:
        if len(self.delimiter) != 1:
            msg = f"delimiter must be a single character, got {self.delimiter!r}"
            raise ConfigError(msg)
        if self.k <= 0:
            msg = f"k must be > 0, got {self.k}"
            raise ConfigError(msg)
        if self.coordinate_mode not in {m.value for m in CoordinateMode}:
            msg = f"Unknown coordinate_mode {self.coordinate_mode!r}"
            raise ConfigError(msg)
        if self.schema_version not in LAYOUTS:
            msg = f"Unknown schema_version {self.schema_version!r}"
            raise ConfigError(msg)
        if self.split_mode not in SPLIT_MODES:
            msg = f"split_mode must be one of {SPLIT_MODES}"
            raise ConfigError(msg)
        if self.ablation_preset.lower() not in PRESET_REGISTRY:
            msg = f"Unknown ablation_preset {self.ablation_preset!r}"
            raise ConfigError(msg)
        if self.threads < 0:
            msg = "threads must be >= 0"
            raise ConfigError(msg)
        try:
            NetworkSpec.parse(self.spec)
            self.train_config()
        except (ShapeError, TrainingError) as e:
            raise ConfigError(str(e)) from e

    @property
    def departures_path(self) -> Path:
        return self.departures or self.workdir / "departures.csv"

    @property
    def weather_path(self) -> Path:
        return self.weather or self.workdir / "weather.csv"

    @property
    def stops_path(self) -> Path:
        return self.stops or self.workdir / "stops.csv"

    @property
    def worker_threads(self) -> int:
        return self.threads or os.cpu_count() or 1

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            epochs=self.epochs,
            learning_rate=self.learning_rate,
            batch_size=self.batch_size,
            seed=self.seed,
            split=(self.split_train, self.split_val, self.split_test),
            split_mode=self.split_mode,
        )

    def with_overrides(self, **overrides: Any) -> "RunConfig":
        """Copy with the given keys replaced; ``None`` values are ignored."""
        values = {key: value for key, value in overrides.items() if value is not None}
        return _build({**self.as_dict(), **values})

    def as_dict(self) -> dict[str, Any]:
        return {f.name: getattr(self, f.name) for f in dataclasses.fields(self)}


_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}
_PATH_KEYS = {"departures", "weather", "stops", "workdir"}


def _coerce(key: str, value: Any) -> Any:
    if value is None or not isinstance(value, str):
        return Path(value) if key in _PATH_KEYS and value is not None else value

    text = value.strip()
    if key in _PATH_KEYS:
        return Path(text) if text else None
    default = _FIELDS[key].default
    try:
        if isinstance(default, bool):
            lowered = text.lower()
            if lowered not in _TRUE | _FALSE:
                raise ValueError(text)
            return lowered in _TRUE
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
    except ValueError:
        msg = f"Invalid value for {key}: {value!r}"
        raise ConfigError(msg) from None
    return text


def _build(values: Mapping[str, Any]) -> RunConfig:
    unknown = sorted(set(values) - set(_FIELDS))
    if unknown:
        msg = f"Unknown configuration keys: {', '.join(unknown)}"
        raise ConfigError(msg)
    return RunConfig(**{key: _coerce(key, value) for key, value in values.items()})


def parse_config_text(text: str) -> dict[str, str]:
    """Parse flat ``key = value`` lines into a raw mapping."""
    values: dict[str, str] = {}
    for line_no, line in enumerate(text.splitlines(), 1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        key, sep, value = stripped.partition("=")
        if not sep or not key.strip():
            msg = f"Line {line_no}: expected key = value, got {line.strip()!r}"
            raise ConfigError(msg)
        values[key.strip().lower()] = value.strip()
    return values


def load_run_config(
    path: str | Path | None = None, overrides: Mapping[str, Any] | None = None
) -> RunConfig:
    """
    Build a RunConfig from defaults, an optional file and explicit overrides.

    Raises:
        ConfigError: Unreadable file, unknown key or invalid value
    """
    values: dict[str, Any] = {}
    if path is not None:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as e:
            msg = f"Cannot read config file {path}: {e}"
            raise ConfigError(msg) from e
        values.update(parse_config_text(text))
        logger.debug("Loaded %d config keys from %s", len(values), path)

    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return _build(values)
