"""
Pipeline stages over a working directory.

Each ``run_*`` function reads the previous stage's files from
``RunConfig.workdir`` and writes its own, so stages can be rerun
independently.
"""

import json
import logging
from collections.abc import Callable, Mapping, Sequence
from dataclasses import dataclass
from functools import wraps
from pathlib import Path
from typing import Any, TypeVar

import numpy as np
import pandas as pd

from departnet import artifact
from departnet.config import RunConfig
from departnet.exceptions import (
    DepartnetError,
    FeatureError,
    PipelineError,
    SchemaVersionError,
)
from departnet.features import (
    FeatureMatrix,
    FeatureSchema,
    WeatherIndex,
    apply_scaler,
    encode,
    encode_segments,
)
from departnet.ingest import (
    ParseConfig,
    parse_departures,
    parse_stops,
    parse_weather,
    write_rejects,
)
from departnet.nn import NetworkSpec
from departnet.preprocess import (
    DatasetSummary,
    DeviationStats,
    TripSegment,
    assemble_trips,
    dataset_stats,
    deviation,
    filter_outliers,
    outlier_thresholds,
    read_segments,
    segment_trips,
    trips_per_route,
    write_segments,
    write_trips_per_route,
)
from departnet.presets import get_preset
from departnet.records import Reject, StopLocation
from departnet.report import (
    ABLATION_FILE,
    EVALUATION_FILE,
    HISTORY_FILE,
    ReportBundle,
    read_ablation,
    read_evaluation,
    read_history,
    report,
    write_ablation,
    write_evaluation,
    write_history,
)
from departnet.synth import SynthConfig, SynthResult, generate
from departnet.training import (
    AblationRow,
    DeparturePrediction,
    EpochLoss,
    EvalReport,
    ablate,
    evaluate,
    measure_latency,
    predict_departure,
    prepare_data,
    train,
)

logging.getLogger(__name__).addHandler(logging.NullHandler())
logger = logging.getLogger(__name__)

F = TypeVar("F", bound=Callable[..., Any])

SEGMENTS_FILE = "segments.csv"
REJECTS_FILE = "rejects.csv"
WEATHER_REJECTS_FILE = "weather_rejects.csv"
STATS_FILE = "preprocess_stats.json"
TRIPS_PER_ROUTE_FILE = "trips_per_route.csv"
MODEL_FILE = "model.json"
PREDICTIONS_FILE = "predictions.csv"
REPORT_DIR = "report"


def _stage(func: F) -> F:
    """Let library errors through; wrap anything else in PipelineError."""

    @wraps(func)
    def wrapper(*args: Any, **kwargs: Any) -> Any:
        try:
            return func(*args, **kwargs)
        except DepartnetError:
            raise
        except Exception as e:
            logger.debug("Stage %s failed: %r", func.__name__, e, exc_info=True)
            msg = f"{func.__name__} failed: {e}"
            raise PipelineError(msg) from e

    return wrapper  # type: ignore[return-value]


@dataclass(frozen=True)
class PreprocessResult:
    rows_in: int
    records: int
    rejects: int
    weather_rejects: int
    stats: DeviationStats
    dropped: int
    summary: DatasetSummary
    trips: int
    segments: int
    files: tuple[Path, ...]


@dataclass(frozen=True, eq=False)
class TrainResult:
    spec: NetworkSpec
    history: list[EpochLoss]
    evaluation: EvalReport
    split_sizes: tuple[int, int, int]
    files: tuple[Path, ...]


@dataclass(frozen=True)
class QueryFailure:
    row: int
    key: tuple[str, int]
    error: str


@dataclass(frozen=True)
class PredictResult:
    predictions: list[tuple[tuple[str, int], DeparturePrediction]]
    failures: list[QueryFailure]
    latency_us: float
    path: Path


def _parse_config(run: RunConfig) -> ParseConfig:
    return ParseConfig(delimiter=run.delimiter)


def _load_context(
    run: RunConfig,
) -> tuple[WeatherIndex, dict[str, StopLocation], list[Reject]]:
    observations, weather_rejects = parse_weather(run.weather_path, _parse_config(run))
    stops = parse_stops(run.stops_path, _parse_config(run))
    return WeatherIndex(observations), stops, weather_rejects


def _schema_options(run: RunConfig) -> dict[str, Any]:
    return {
        "version": run.schema_version,
        "far_threshold": run.far_threshold_m,
        "coordinate_mode": run.coordinate_mode,
    }


@_stage
def run_synth(config: SynthConfig, workdir: str | Path) -> SynthResult:
    return generate(config, workdir)


@_stage
def run_preprocess(run: RunConfig) -> PreprocessResult:
    """
    Parse the inputs, drop outliers and write the segments file.

    Outputs: segments.csv, rejects.csv, weather_rejects.csv,
    trips_per_route.csv, preprocess_stats.json.
    """
    workdir = run.workdir
    workdir.mkdir(parents=True, exist_ok=True)
    records, rejects = parse_departures(run.departures_path, _parse_config(run))
    _, stops, weather_rejects = _load_context(run)
    if not records:
        msg = f"No valid departure rows in {run.departures_path}"
        raise PipelineError(msg)

    stats = outlier_thresholds((deviation(r) for r in records), run.k)
    if run.outlier_filter:
        kept, dropped = filter_outliers(records, stats)
    else:
        kept, dropped = list(records), 0

    trips = assemble_trips(kept)
    segments = segment_trips(trips)
    summary = dataset_stats(kept)
    unknown = {r.stop_id for r in kept} - stops.keys()
    if unknown:
        logger.warning(
            "%d departure stop_ids are missing from the stops file", len(unknown)
        )

    files = (
        write_segments(segments, workdir / SEGMENTS_FILE),
        write_rejects(rejects, workdir / REJECTS_FILE),
        write_rejects(weather_rejects, workdir / WEATHER_REJECTS_FILE),
        write_trips_per_route(trips_per_route(trips), workdir / TRIPS_PER_ROUTE_FILE),
        workdir / STATS_FILE,
    )
    result = PreprocessResult(
        rows_in=len(records) + len(rejects),
        records=len(records),
        rejects=len(rejects),
        weather_rejects=len(weather_rejects),
        stats=stats,
        dropped=dropped,
        summary=summary,
        trips=len(trips),
        segments=len(segments),
        files=files,
    )
    files[-1].write_text(json.dumps(_stats_document(result), indent=2) + "\n")
    logger.debug(
        "Preprocess wrote %d segments from %d trips", len(segments), len(trips)
    )
    return result


def _stats_document(result: PreprocessResult) -> dict[str, Any]:
    s = result.summary
    return {
        "rows_in": result.rows_in,
        "records": result.records,
        "rejects": result.rejects,
        "weather_rejects": result.weather_rejects,
        "outliers": {
            "mean_s": result.stats.mean,
            "std_s": result.stats.std_dev,
            "k": result.stats.k,
            "low_s": result.stats.low,
            "high_s": result.stats.high,
            "dropped": result.dropped,
        },
        "kept": {
            "departures": s.n,
            "trips": s.trips,
            "routes": s.routes,
            "stops": s.stops,
            "mean_deviation_s": s.mean_deviation,
            "std_deviation_s": s.std_deviation,
            "min_deviation_s": s.min_deviation,
            "max_deviation_s": s.max_deviation,
            "delayed_fraction": s.delayed_fraction,
        },
        "segments": result.segments,
    }


def _encodable(
    segments: Sequence[TripSegment],
    weather: WeatherIndex,
    stops: Mapping[str, StopLocation],
) -> list[TripSegment]:
    kept = []
    for segment in segments:
        if segment.current.stop_id not in stops or segment.next.stop_id not in stops:
            continue
        try:
            weather.nearest(segment.current.scheduled_time)
        except FeatureError:
            continue
        kept.append(segment)
    if len(kept) < len(segments):
        logger.warning(
            "Skipped %d segments with unknown stops or no weather within an hour",
            len(segments) - len(kept),
        )
    return kept


def build_features(run: RunConfig) -> tuple[FeatureMatrix, FeatureSchema]:
    """Encode every encodable segment of the segments file."""
    path = run.workdir / SEGMENTS_FILE
    segments = read_segments(path)
    if not segments:
        msg = f"No segments in {path}; run preprocess first"
        raise PipelineError(msg)

    weather, stops, _ = _load_context(run)
    segments = _encodable(segments, weather, stops)
    schema = FeatureSchema.from_routes(
        (s.route_id for s in segments), **_schema_options(run)
    )
    matrix = encode_segments(segments, weather, stops, schema, run.worker_threads)
    return matrix, schema


@_stage
def run_train(run: RunConfig) -> TrainResult:
    """Train ``run.spec`` and write model.json, history.csv and evaluation.json."""
    matrix, schema = build_features(run)
    config = run.train_config()
    data = prepare_data(matrix, config)
    spec = NetworkSpec.parse(run.spec, input_dim=schema.total_dims)

    net, history = train(spec, data.train, data.val, config)
    evaluation = evaluate(net, data.test)
    files = (
        artifact.save(net, data.scaler, schema, run.workdir / MODEL_FILE),
        write_history(history, run.workdir / HISTORY_FILE),
        write_evaluation(evaluation, run.workdir / EVALUATION_FILE),
    )
    return TrainResult(
        spec=spec,
        history=history,
        evaluation=evaluation,
        split_sizes=(len(data.train), len(data.val), len(data.test)),
        files=files,
    )


@_stage
def run_ablate(
    run: RunConfig, hidden_layers: Sequence[str] | None = None
) -> list[AblationRow]:
    """
    Train each architecture on one shared split and write ablation.csv.

    ``hidden_layers`` entries look like ``"256,64"``; without them the
    configured preset is used.
    """
    matrix, schema = build_features(run)
    config = run.train_config()
    data = prepare_data(matrix, config)
    if hidden_layers:
        specs = [
            NetworkSpec.parse(h, input_dim=schema.total_dims) for h in hidden_layers
        ]
    else:
        specs = get_preset(run.ablation_preset, input_dim=schema.total_dims)

    rows = ablate(specs, data, config)
    write_ablation(rows, run.workdir / ABLATION_FILE)
    return rows


@_stage
def run_predict(
    run: RunConfig, query: str | Path, model: str | Path | None = None
) -> PredictResult:
    """
    Predict next-stop departures for every row of a query segments file.

    Rows that cannot be encoded are reported as failures; the others still
    get predictions.

    Raises:
        SchemaVersionError: The model was trained on another feature layout
    """
    loaded = artifact.load(model or run.workdir / MODEL_FILE)
    if loaded.schema.version != run.schema_version:
        msg = (
            f"Model uses feature schema {loaded.schema.version!r} but the run "
            f"is configured for {run.schema_version!r}"
        )
        raise SchemaVersionError(msg)

    segments = read_segments(query)
    weather, stops, _ = _load_context(run)

    predictions = []
    failures = []
    encoded = []
    for row, segment in enumerate(segments, 1):
        try:
            prediction = predict_departure(
                loaded.network, loaded.scaler, loaded.schema, segment, weather, stops
            )
        except FeatureError as e:
            failures.append(QueryFailure(row, segment.key, str(e)))
            continue
        predictions.append((segment.key, prediction))
        encoded.append(encode(segment, weather, stops, loaded.schema).values)

    latency = 0.0
    if encoded:
        scaled = apply_scaler(np.vstack(encoded), loaded.scaler)
        latency = measure_latency(loaded.network, scaled)

    path = run.workdir / PREDICTIONS_FILE
    path.parent.mkdir(parents=True, exist_ok=True)
    pd.DataFrame(
        [
            (
                key[0],
                key[1],
                p.route_id,
                p.next_stop_id,
                p.scheduled_time.isoformat(sep=" "),
                repr(p.deviation),
                p.predicted_time.isoformat(sep=" "),
            )
            for key, p in predictions
        ],
        columns=[
            "half_trip_id",
            "timepoint_order",
            "route_id",
            "next_stop_id",
            "scheduled_time",
            "predicted_deviation_s",
            "predicted_time",
        ],
    ).to_csv(path, index=False)
    if failures:
        logger.warning("%d of %d query rows failed", len(failures), len(segments))
    return PredictResult(predictions, failures, latency, path)


def _stop_deviations(segments: Sequence[TripSegment]) -> list[float]:
    """One deviation per observed (half_trip_id, timepoint_order) departure."""
    seen: dict[tuple[str, int], float] = {}
    for s in segments:
        current = (s.half_trip_id, s.current.timepoint_order)
        seen.setdefault(current, s.current_deviation)
        if s.next_deviation is not None:
            seen.setdefault(s.key, s.next_deviation)
    return list(seen.values())


@_stage
def run_report(run: RunConfig, out: str | Path | None = None) -> ReportBundle:
    """Rebuild the report bundle from the files of earlier stages."""
    workdir = run.workdir
    evaluation = read_evaluation(workdir / EVALUATION_FILE)
    history = read_history(workdir / HISTORY_FILE)
    ablation_path = workdir / ABLATION_FILE
    ablation = read_ablation(ablation_path) if ablation_path.exists() else None
    segments_path = workdir / SEGMENTS_FILE
    deviations = (
        _stop_deviations(read_segments(segments_path))
        if segments_path.exists()
        else None
    )
    return report(
        evaluation,
        history,
        out or workdir / REPORT_DIR,
        ablation=ablation,
        deviations=deviations,
    )
