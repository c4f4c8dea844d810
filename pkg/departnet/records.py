from dataclasses import dataclass
from datetime import date, datetime
from enum import Enum


class Direction(str, Enum):
    INBOUND = "inbound"
    OUTBOUND = "outbound"


class PointType(str, Enum):
    STARTPOINT = "startpoint"
    MIDPOINT = "midpoint"
    ENDPOINT = "endpoint"


class StandardType(str, Enum):
    SCHEDULE = "schedule"
    HEADWAY = "headway"


class WeatherCondition(str, Enum):
    CLOUDY = "cloudy"
    RAINY = "rainy"
    CLEAR = "clear"
    SNOWY = "snowy"
    WINDY = "windy"


@dataclass(frozen=True)
class DepartureRecord:
    """
    One row of the transit operations dataset.

    Attributes:
        service_date: Calendar date the trip belongs to
        route_id: Route identifier (e.g. "32")
        direction: Inbound or outbound
        half_trip_id: Identifier of the one-way trip
        stop_id: GTFS stop identifier
        timepoint_id: Timepoint code of the stop within the trip
        timepoint_order: 1-based position of the stop in the trip
        point_type: Start, mid or end point of the trip
        standard_type: Schedule or headway standard (carried, not used)
        scheduled_time: Scheduled departure (local wall clock)
        actual_time: Actual departure (local wall clock, may pass midnight)
        scheduled_headway: Scheduled gap to the previous trip in seconds
        headway: Actual gap to the previous trip in seconds
    """

    service_date: date
    route_id: str
    direction: Direction
    half_trip_id: str
    stop_id: str
    timepoint_id: str
    timepoint_order: int
    point_type: PointType
    standard_type: StandardType
    scheduled_time: datetime
    actual_time: datetime
    scheduled_headway: float | None = None
    headway: float | None = None

    def __post_init__(self) -> None:
        if self.timepoint_order < 1:
            msg = "timepoint_order must be >= 1"
            raise ValueError(msg)
        if not self.stop_id:
            msg = "stop_id cannot be empty"
            raise ValueError(msg)


@dataclass(frozen=True)
class WeatherObservation:
    """Hourly weather; only the condition reaches the encoder."""

    timestamp: datetime
    condition: WeatherCondition
    temperature: float | None = None
    humidity: float | None = None
    wind_speed: float | None = None


@dataclass(frozen=True)
class StopLocation:
    stop_id: str
    x: float
    y: float
    name: str = ""

    @property
    def point(self) -> tuple[float, float]:
        return (self.x, self.y)


@dataclass(frozen=True)
class Reject:
    """A source row that did not become a record."""

    line_no: int
    reason: str
    raw_row: str
