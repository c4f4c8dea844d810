"""
Deviation statistics, outlier removal and trip segmentation.

A departure deviation is ``actual_time - scheduled_time`` in seconds;
positive means the bus left late.
"""

import logging
import math
from collections import Counter
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from datetime import date, datetime
from pathlib import Path

import numpy as np
import pandas as pd

from departnet.exceptions import IngestError, PreprocessError
from departnet.records import DepartureRecord, Direction, PointType

logger = logging.getLogger(__name__)

DEFAULT_K = 2.0


def deviation(record: DepartureRecord) -> float:
    """Signed departure deviation in seconds (positive = late)."""
    return (record.actual_time - record.scheduled_time).total_seconds()


@dataclass(frozen=True)
class DeviationStats:
    """
    Mean/σ outlier band: ``low = mean - k·σ``, ``high = mean + k·σ``.

    σ is the population standard deviation.
    """

    mean: float
    std_dev: float
    k: float
    low: float
    high: float
    n: int

    def contains(self, value: float) -> bool:
        return self.low <= value <= self.high


def thresholds_from_moments(
    mean: float, std_dev: float, k: float = DEFAULT_K, n: int = 0
) -> DeviationStats:
    if std_dev < 0:
        msg = "std_dev must be >= 0"
        raise PreprocessError(msg)
    return DeviationStats(
        mean=mean,
        std_dev=std_dev,
        k=k,
        low=mean - k * std_dev,
        high=mean + k * std_dev,
        n=n,
    )


def outlier_thresholds(
    deviations: Iterable[float], k: float = DEFAULT_K
) -> DeviationStats:
    values = np.fromiter(deviations, dtype=np.float64)
    if values.size == 0:
        msg = "Cannot compute outlier thresholds over an empty population"
        raise PreprocessError(msg)

    # fsum is exactly rounded, so the result does not depend on input order
    mean = math.fsum(values) / values.size
    variance = math.fsum((values - mean) ** 2) / values.size
    stats = thresholds_from_moments(mean, math.sqrt(variance), k, int(values.size))
    logger.debug(
        "Deviation stats: n=%d mean=%.3f std=%.3f band=[%.3f, %.3f]",
        stats.n,
        stats.mean,
        stats.std_dev,
        stats.low,
        stats.high,
    )
    return stats


def filter_outliers(
    records: Sequence[DepartureRecord], stats: DeviationStats
) -> tuple[list[DepartureRecord], int]:
    """Keep records whose deviation lies in ``[low, high]`` (inclusive)."""
    kept = [r for r in records if stats.contains(deviation(r))]
    dropped = len(records) - len(kept)
    logger.debug("Outlier filter kept %d, dropped %d", len(kept), dropped)
    return kept, dropped


@dataclass(frozen=True)
class Trip:
    half_trip_id: str
    route_id: str
    direction: Direction
    records: tuple[DepartureRecord, ...]

    def __post_init__(self) -> None:
        orders = [r.timepoint_order for r in self.records]
        if any(a >= b for a, b in zip(orders, orders[1:])):
            msg = f"Trip {self.half_trip_id}: records not strictly ordered"
            raise ValueError(msg)
        for r in self.records:
            if (r.half_trip_id, r.route_id, r.direction) != (
                self.half_trip_id,
                self.route_id,
                self.direction,
            ):
                msg = f"Trip {self.half_trip_id}: mixed trip identity"
                raise ValueError(msg)

    def __len__(self) -> int:
        return len(self.records)


def assemble_trips(records: Iterable[DepartureRecord]) -> list[Trip]:
    """
    Group records into one Trip per half_trip_id, sorted by timepoint_order.

    Trips come out in order of first appearance. A repeated
    (half_trip_id, timepoint_order) pair keeps its first record, and so
    does a record whose route_id or direction disagrees with the first
    record seen for its half_trip_id.
    """
    groups: dict[str, dict[int, DepartureRecord]] = {}
    identities: dict[str, tuple[str, Direction]] = {}
    duplicates = 0
    mismatched = 0
    for record in records:
        identity = identities.setdefault(
            record.half_trip_id, (record.route_id, record.direction)
        )
        if identity != (record.route_id, record.direction):
            mismatched += 1
            continue
        stops = groups.setdefault(record.half_trip_id, {})
        if record.timepoint_order in stops:
            duplicates += 1
            continue
        stops[record.timepoint_order] = record

    if duplicates:
        logger.warning(
            "Ignored %d duplicate (half_trip_id, timepoint_order) rows", duplicates
        )
    if mismatched:
        logger.warning(
            "Ignored %d rows whose route or direction differs from their trip",
            mismatched,
        )

    trips = []
    for half_trip_id, stops in groups.items():
        ordered = tuple(stops[order] for order in sorted(stops))
        first = ordered[0]
        trips.append(Trip(half_trip_id, first.route_id, first.direction, ordered))
    return trips


@dataclass(frozen=True)
class StopView:
    stop_id: str
    timepoint_order: int
    point_type: PointType
    scheduled_time: datetime
    actual_time: datetime | None
    scheduled_headway: float | None = None

    @classmethod
    def from_record(cls, record: DepartureRecord) -> "StopView":
        return cls(
            stop_id=record.stop_id,
            timepoint_order=record.timepoint_order,
            point_type=record.point_type,
            scheduled_time=record.scheduled_time,
            actual_time=record.actual_time,
            scheduled_headway=record.scheduled_headway,
        )


@dataclass(frozen=True)
class TripSegment:
    """
    A consecutive (current stop, next stop) pair of one half-trip.

    ``next_deviation`` is the learning target; it is None for prediction
    queries where the next departure has not happened yet.
    """

    half_trip_id: str
    route_id: str
    direction: Direction
    service_date: date
    current: StopView
    next: StopView
    current_deviation: float
    next_deviation: float | None
    order_gap: bool = False

    @property
    def key(self) -> tuple[str, int]:
        """Identity of the predicted departure: (half_trip_id, next order)."""
        return (self.half_trip_id, self.next.timepoint_order)


def segment_trips(trips: Iterable[Trip]) -> list[TripSegment]:
    """Split every trip of L >= 2 stops into its L-1 consecutive pairs."""
    segments = []
    gaps = 0
    for trip in trips:
        for current, upcoming in zip(trip.records, trip.records[1:]):
            order_gap = upcoming.timepoint_order != current.timepoint_order + 1
            gaps += order_gap
            segments.append(
                TripSegment(
                    half_trip_id=trip.half_trip_id,
                    route_id=trip.route_id,
                    direction=trip.direction,
                    service_date=current.service_date,
                    current=StopView.from_record(current),
                    next=StopView.from_record(upcoming),
                    current_deviation=deviation(current),
                    next_deviation=deviation(upcoming),
                    order_gap=order_gap,
                )
            )
    if gaps:
        logger.warning("%d segments pair stops across a timepoint_order gap", gaps)
    return segments


@dataclass(frozen=True)
class DatasetSummary:
    n: int
    trips: int
    routes: int
    stops: int
    mean_deviation: float
    std_deviation: float
    min_deviation: float
    max_deviation: float
    delayed: int

    @property
    def delayed_fraction(self) -> float:
        return self.delayed / self.n


def dataset_stats(records: Sequence[DepartureRecord]) -> DatasetSummary:
    if not records:
        msg = "Cannot summarize an empty dataset"
        raise PreprocessError(msg)

    deviations = [deviation(r) for r in records]
    stats = outlier_thresholds(deviations)
    return DatasetSummary(
        n=len(records),
        trips=len({r.half_trip_id for r in records}),
        routes=len({r.route_id for r in records}),
        stops=len({r.stop_id for r in records}),
        mean_deviation=stats.mean,
        std_deviation=stats.std_dev,
        min_deviation=min(deviations),
        max_deviation=max(deviations),
        delayed=sum(d > 0 for d in deviations),
    )


def trips_per_route(trips: Iterable[Trip]) -> list[tuple[str, int]]:
    """Trip count of every route, busiest first; ties sort by route_id."""
    counts = Counter(t.route_id for t in trips)
    return sorted(counts.items(), key=lambda item: (-item[1], item[0]))


def write_trips_per_route(counts: list[tuple[str, int]], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pd.DataFrame(counts, columns=["route_id", "trips"]).to_csv(path, index=False)
    return path


SEGMENT_COLUMNS = (
    "half_trip_id",
    "route_id",
    "direction",
    "service_date",
    "current_stop_id",
    "current_timepoint_order",
    "current_point_type",
    "current_scheduled_time",
    "current_actual_time",
    "current_scheduled_headway",
    "next_stop_id",
    "next_timepoint_order",
    "next_point_type",
    "next_scheduled_time",
    "next_actual_time",
    "next_scheduled_headway",
    "current_deviation_s",
    "next_deviation_s",
    "order_gap",
)


def _text(value: object) -> str:
    if value is None:
        return ""
    if isinstance(value, datetime):
        return value.isoformat(sep=" ")
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (Direction, PointType)):
        return value.value
    return str(value)


def _stop_fields(view: StopView) -> list[object]:
    return [
        view.stop_id,
        view.timepoint_order,
        view.point_type,
        view.scheduled_time,
        view.actual_time,
        view.scheduled_headway,
    ]


def write_segments(segments: Iterable[TripSegment], path: str | Path) -> Path:
    """Write segments as delimited text, one segment per row."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    rows = [
        [
            _text(value)
            for value in (
                s.half_trip_id,
                s.route_id,
                s.direction,
                s.service_date.isoformat(),
                *_stop_fields(s.current),
                *_stop_fields(s.next),
                s.current_deviation,
                s.next_deviation,
                int(s.order_gap),
            )
        ]
        for s in segments
    ]
    pd.DataFrame(rows, columns=list(SEGMENT_COLUMNS)).to_csv(path, index=False)
    logger.debug("Wrote %d segments to %s", len(rows), path)
    return path


def _timestamps(
    frame: pd.DataFrame, column: str, required: bool
) -> list[datetime | None]:
    text = frame[column].str.strip()
    parsed = pd.to_datetime(text, errors="coerce", format="ISO8601")
    bad = parsed.isna() & ((text != "") | required)
    if bad.any():
        line = int(np.flatnonzero(bad.to_numpy())[0]) + 2
        msg = f"Line {line}: missing or malformed {column}"
        raise IngestError(msg)
    return [None if pd.isna(ts) else ts.to_pydatetime() for ts in parsed]


def _numbers(frame: pd.DataFrame, column: str) -> list[float | None]:
    values = pd.to_numeric(frame[column].str.strip(), errors="coerce")
    return [None if np.isnan(v) else float(v) for v in values]


def read_segments(path: str | Path) -> list[TripSegment]:
    """
    Read a segments file written by ``write_segments``.

    The next stop's actual time and deviation may be empty; such rows are
    prediction queries.
    """
    frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    missing = [c for c in SEGMENT_COLUMNS if c not in frame.columns]
    if missing:
        msg = f"Segments file {path} lacks columns: {', '.join(missing)}"
        raise IngestError(msg)

    try:
        directions = [Direction(v.strip().lower()) for v in frame["direction"]]
        current_types = [PointType(v.strip().lower()) for v in frame.current_point_type]
        next_types = [PointType(v.strip().lower()) for v in frame.next_point_type]
        dates = [date.fromisoformat(v.strip()) for v in frame["service_date"]]
        current_orders = [int(v) for v in frame["current_timepoint_order"]]
        next_orders = [int(v) for v in frame["next_timepoint_order"]]
    except ValueError as e:
        msg = f"Malformed segments file {path}: {e}"
        raise IngestError(msg) from e

    current_scheduled = _timestamps(frame, "current_scheduled_time", required=True)
    current_actual = _timestamps(frame, "current_actual_time", required=True)
    next_scheduled = _timestamps(frame, "next_scheduled_time", required=True)
    next_actual = _timestamps(frame, "next_actual_time", required=False)
    current_headway = _numbers(frame, "current_scheduled_headway")
    next_headway = _numbers(frame, "next_scheduled_headway")
    current_deviation = _numbers(frame, "current_deviation_s")
    next_deviation = _numbers(frame, "next_deviation_s")

    segments = []
    for i in range(len(frame)):
        cur_dev = current_deviation[i]
        if cur_dev is None:
            cur_dev = (current_actual[i] - current_scheduled[i]).total_seconds()
        segments.append(
            TripSegment(
                half_trip_id=frame["half_trip_id"].iloc[i],
                route_id=frame["route_id"].iloc[i],
                direction=directions[i],
                service_date=dates[i],
                current=StopView(
                    stop_id=frame["current_stop_id"].iloc[i],
                    timepoint_order=current_orders[i],
                    point_type=current_types[i],
                    scheduled_time=current_scheduled[i],
                    actual_time=current_actual[i],
                    scheduled_headway=current_headway[i],
                ),
                next=StopView(
                    stop_id=frame["next_stop_id"].iloc[i],
                    timepoint_order=next_orders[i],
                    point_type=next_types[i],
                    scheduled_time=next_scheduled[i],
                    actual_time=next_actual[i],
                    scheduled_headway=next_headway[i],
                ),
                current_deviation=cur_dev,
                next_deviation=next_deviation[i],
                order_gap=frame["order_gap"].iloc[i].strip() in {"1", "true", "True"},
            )
        )
    return segments
