import io
from datetime import date, datetime, timedelta

from departnet.ingest import DEPARTURE_COLUMNS
from departnet.preprocess import StopView, TripSegment
from departnet.records import (
    DepartureRecord,
    Direction,
    PointType,
    StandardType,
    StopLocation,
    WeatherCondition,
    WeatherObservation,
)

SERVICE_DATE = date(2023, 1, 9)

DEFAULT_ROW = {
    "service_date": "2023-01-09",
    "route_id": "32",
    "direction": "Outbound",
    "half_trip_id": "100",
    "stop_id": "1000",
    "timepoint_id": "tp1",
    "timepoint_order": "1",
    "point_type": "Startpoint",
    "standard_type": "Schedule",
    "scheduled_time": "2023-01-09 10:00:00",
    "actual_time": "2023-01-09 10:01:00",
    "scheduled_headway": "600",
    "headway": "620",
}


def departure_row(**overrides: str) -> dict[str, str]:
    return {**DEFAULT_ROW, **overrides}


def departures_csv(rows: list[dict[str, str]], delimiter: str = ",") -> io.StringIO:
    """Delimited departures text with the canonical header."""
    lines = [delimiter.join(DEPARTURE_COLUMNS)]
    lines += [delimiter.join(row[c] for c in DEPARTURE_COLUMNS) for row in rows]
    return io.StringIO("\n".join(lines) + "\n")


def trip_rows(
    half_trip_id: str,
    n_stops: int,
    route_id: str = "32",
    start: datetime = datetime(2023, 1, 9, 10, 0),
    deviations: list[float] | None = None,
) -> list[dict[str, str]]:
    """Rows for one half-trip, stops 5 minutes apart."""
    deviations = deviations or [60.0] * n_stops
    rows = []
    for i in range(n_stops):
        scheduled = start + timedelta(minutes=5 * i)
        actual = scheduled + timedelta(seconds=deviations[i])
        point_type = (
            "Startpoint" if i == 0 else "Endpoint" if i == n_stops - 1 else "Midpoint"
        )
        rows.append(
            departure_row(
                route_id=route_id,
                half_trip_id=half_trip_id,
                stop_id=str(1000 + i),
                timepoint_id=f"tp{i + 1}",
                timepoint_order=str(i + 1),
                point_type=point_type,
                scheduled_time=scheduled.isoformat(sep=" "),
                actual_time=actual.isoformat(sep=" "),
            )
        )
    return rows


def make_record(
    scheduled: datetime = datetime(2023, 1, 9, 10, 0),
    deviation_s: float = 0.0,
    half_trip_id: str = "100",
    timepoint_order: int = 1,
    route_id: str = "32",
    stop_id: str | None = None,
    direction: Direction = Direction.OUTBOUND,
) -> DepartureRecord:
    return DepartureRecord(
        service_date=scheduled.date(),
        route_id=route_id,
        direction=direction,
        half_trip_id=half_trip_id,
        stop_id=stop_id or str(999 + timepoint_order),
        timepoint_id=f"tp{timepoint_order}",
        timepoint_order=timepoint_order,
        point_type=PointType.MIDPOINT,
        standard_type=StandardType.SCHEDULE,
        scheduled_time=scheduled,
        actual_time=scheduled + timedelta(seconds=deviation_s),
        scheduled_headway=600.0,
    )


def records_with_deviations(values: list[float]) -> list[DepartureRecord]:
    """One single-stop trip per deviation."""
    return [
        make_record(deviation_s=v, half_trip_id=str(i)) for i, v in enumerate(values)
    ]


def make_segment(
    current_deviation: float = 0.0,
    next_deviation: float | None = 30.0,
    route_id: str = "32",
    direction: Direction = Direction.OUTBOUND,
    scheduled: datetime = datetime(2023, 1, 9, 12, 0),
    current_stop: str = "A",
    next_stop: str = "B",
    point_type: PointType = PointType.MIDPOINT,
    scheduled_headway: float | None = None,
    half_trip_id: str = "100",
    order: int = 2,
) -> TripSegment:
    next_scheduled = scheduled + timedelta(minutes=4)
    return TripSegment(
        half_trip_id=half_trip_id,
        route_id=route_id,
        direction=direction,
        service_date=scheduled.date(),
        current=StopView(
            stop_id=current_stop,
            timepoint_order=order,
            point_type=point_type,
            scheduled_time=scheduled,
            actual_time=scheduled + timedelta(seconds=current_deviation),
            scheduled_headway=scheduled_headway,
        ),
        next=StopView(
            stop_id=next_stop,
            timepoint_order=order + 1,
            point_type=PointType.MIDPOINT,
            scheduled_time=next_scheduled,
            actual_time=None
            if next_deviation is None
            else next_scheduled + timedelta(seconds=next_deviation),
        ),
        current_deviation=current_deviation,
        next_deviation=next_deviation,
    )


def make_stops(**points: tuple[float, float]) -> dict[str, StopLocation]:
    return {stop_id: StopLocation(stop_id, x, y) for stop_id, (x, y) in points.items()}


# Two downtown Boston stops about 1.1 km apart
NEAR_STOPS = make_stops(A=(-71.0589, 42.3601), B=(-71.0589, 42.3701))


def observation(
    when: datetime = datetime(2023, 1, 9, 12, 0),
    condition: WeatherCondition = WeatherCondition.CLEAR,
) -> WeatherObservation:
    return WeatherObservation(timestamp=when, condition=condition)


def hourly_weather(
    day: date = SERVICE_DATE,
    days: int = 1,
    condition: WeatherCondition = WeatherCondition.CLOUDY,
) -> list[WeatherObservation]:
    start = datetime.combine(day, datetime.min.time())
    return [
        observation(start + timedelta(hours=h), condition) for h in range(24 * days)
    ]


def assert_partition(records: list[DepartureRecord], kept: list, dropped: int) -> None:
    """The filter kept a subset and the counts add up."""
    assert len(kept) + dropped == len(records)
    assert all(r in records for r in kept)


def assert_segment_consistent(segment: TripSegment) -> None:
    current = segment.current
    recomputed = (current.actual_time - current.scheduled_time).total_seconds()
    assert segment.current_deviation == recomputed
    assert segment.next.timepoint_order > current.timepoint_order
