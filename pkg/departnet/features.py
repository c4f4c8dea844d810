"""
Feature encoding of trip segments and Min-Max input scaling.

The canonical layout ("1") has 22 fixed slots followed by one slot per
route in the sorted route vocabulary::

    0 day_type            6..10 weather one-hot     17 scheduled_headway
    1 rush_hour           11..12 direction one-hot  18 timepoint_order
    2 lateness_status     13..16 cur_x, cur_y,      19..21 point_type one-hot
    3 current_deviation          next_x, next_y     22.. route one-hot
    4 stop_distance
    5 far_status
"""

import bisect
import logging
import math
from collections.abc import Iterable, Mapping, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import date, datetime, time, timedelta
from enum import Enum
from typing import Any

import numpy as np

from departnet.exceptions import (
    FeatureError,
    MissingWeatherError,
    SchemaVersionError,
    UnknownRouteError,
    UnknownStopError,
)
from departnet.preprocess import TripSegment
from departnet.records import (
    Direction,
    PointType,
    StopLocation,
    WeatherCondition,
    WeatherObservation,
)

logger = logging.getLogger(__name__)

EARTH_RADIUS_M = 6_371_000.0
DEFAULT_FAR_THRESHOLD_M = 1488.0
DEFAULT_RUSH_WINDOWS = ((time(7, 0), time(9, 0)), (time(16, 0), time(18, 0)))
WEATHER_WINDOW = timedelta(hours=1)

WEATHER_ORDER = (
    WeatherCondition.CLOUDY,
    WeatherCondition.RAINY,
    WeatherCondition.CLEAR,
    WeatherCondition.SNOWY,
    WeatherCondition.WINDY,
)
DIRECTION_ORDER = (Direction.INBOUND, Direction.OUTBOUND)
POINT_TYPE_ORDER = (PointType.STARTPOINT, PointType.MIDPOINT, PointType.ENDPOINT)

_BASE_SLOTS = (
    "day_type",
    "rush_hour",
    "lateness_status",
    "current_deviation",
    "stop_distance",
    "far_status",
    *(f"weather_{c.value}" for c in WEATHER_ORDER),
    *(f"direction_{d.value}" for d in DIRECTION_ORDER),
    "cur_x",
    "cur_y",
    "next_x",
    "next_y",
)
_EXTRA_SLOTS = (
    "scheduled_headway",
    "timepoint_order",
    *(f"point_{p.value}" for p in POINT_TYPE_ORDER),
)

# Fixed slots per schema version; route one-hot slots follow them
LAYOUTS: dict[str, tuple[str, ...]] = {
    "1": _BASE_SLOTS + _EXTRA_SLOTS,
    "enumerated": _BASE_SLOTS,
}
CANONICAL_VERSION = "1"


class CoordinateMode(str, Enum):
    GEODETIC = "geodetic"
    PROJECTED = "projected"


def stop_distance(
    a: tuple[float, float],
    b: tuple[float, float],
    mode: CoordinateMode | str = CoordinateMode.GEODETIC,
) -> float:
    """
    Distance in meters between two (x, y) points.

    Geodetic mode reads x as longitude and y as latitude (degrees) and uses
    the haversine formula; projected mode is plain Euclidean distance.
    """
    coords = (*a, *b)
    if not all(math.isfinite(c) for c in coords):
        msg = f"Non-finite coordinates: {a} -> {b}"
        raise FeatureError(msg)

    if CoordinateMode(mode) is CoordinateMode.PROJECTED:
        return math.hypot(b[0] - a[0], b[1] - a[1])

    lon1, lat1, lon2, lat2 = map(math.radians, coords)
    h = (
        math.sin((lat2 - lat1) / 2) ** 2
        + math.cos(lat1) * math.cos(lat2) * math.sin((lon2 - lon1) / 2) ** 2
    )
    return 2 * EARTH_RADIUS_M * math.asin(math.sqrt(min(1.0, h)))


def day_type(service_date: date) -> int:
    """1 for Saturday/Sunday, else 0. Holidays are not special-cased."""
    return int(service_date.weekday() >= 5)


def rush_hour(
    scheduled_time: datetime,
    windows: Sequence[tuple[time, time]] = DEFAULT_RUSH_WINDOWS,
) -> int:
    """1 when the local time of day falls in a half-open rush window."""
    clock = scheduled_time.time()
    return int(any(start <= clock < end for start, end in windows))


@dataclass(frozen=True)
class FeatureSchema:
    route_vocabulary: tuple[str, ...]
    version: str = CANONICAL_VERSION
    far_threshold: float = DEFAULT_FAR_THRESHOLD_M
    rush_windows: tuple[tuple[time, time], ...] = DEFAULT_RUSH_WINDOWS
    coordinate_mode: CoordinateMode = CoordinateMode.GEODETIC
    _route_index: dict[str, int] = field(
        init=False, repr=False, compare=False, hash=False
    )

    def __post_init__(self) -> None:
        if self.version not in LAYOUTS:
            msg = f"Unknown feature schema version: {self.version}"
            raise SchemaVersionError(msg)
        vocabulary = tuple(self.route_vocabulary)
        if list(vocabulary) != sorted(set(vocabulary)):
            msg = "route_vocabulary must be sorted and duplicate-free"
            raise ValueError(msg)
        object.__setattr__(self, "route_vocabulary", vocabulary)
        mode = CoordinateMode(self.coordinate_mode)
        object.__setattr__(self, "coordinate_mode", mode)
        object.__setattr__(
            self, "_route_index", {route: i for i, route in enumerate(vocabulary)}
        )

    @classmethod
    def from_routes(cls, routes: Iterable[str], **options: Any) -> "FeatureSchema":
        return cls(route_vocabulary=tuple(sorted(set(routes))), **options)

    @property
    def fixed_slots(self) -> tuple[str, ...]:
        return LAYOUTS[self.version]

    @property
    def total_dims(self) -> int:
        return len(self.fixed_slots) + len(self.route_vocabulary)

    @property
    def slot_names(self) -> tuple[str, ...]:
        return self.fixed_slots + tuple(f"route_{r}" for r in self.route_vocabulary)

    def route_slot(self, route_id: str) -> int:
        try:
            return len(self.fixed_slots) + self._route_index[route_id]
        except KeyError:
            raise UnknownRouteError(route_id) from None

    def to_dict(self) -> dict[str, Any]:
        return {
            "version": self.version,
            "route_vocabulary": list(self.route_vocabulary),
            "far_threshold": self.far_threshold,
            "rush_windows": [
                [start.isoformat(), end.isoformat()] for start, end in self.rush_windows
            ],
            "coordinate_mode": self.coordinate_mode.value,
            "total_dims": self.total_dims,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "FeatureSchema":
        schema = cls(
            route_vocabulary=tuple(data["route_vocabulary"]),
            version=str(data["version"]),
            far_threshold=float(data["far_threshold"]),
            rush_windows=tuple(
                (time.fromisoformat(start), time.fromisoformat(end))
                for start, end in data["rush_windows"]
            ),
            coordinate_mode=CoordinateMode(data["coordinate_mode"]),
        )
        if "total_dims" in data and int(data["total_dims"]) != schema.total_dims:
            msg = "Declared total_dims does not match the route vocabulary"
            raise SchemaVersionError(msg)
        return schema


class WeatherIndex:
    """Nearest-observation lookup over hourly weather."""

    def __init__(
        self,
        observations: Iterable[WeatherObservation],
        window: timedelta = WEATHER_WINDOW,
    ) -> None:
        ordered = sorted(observations, key=lambda o: o.timestamp)
        self._times = [o.timestamp for o in ordered]
        self._observations = ordered
        self.window = window

    def __len__(self) -> int:
        return len(self._observations)

    def nearest(self, when: datetime) -> WeatherObservation:
        """The observation closest to ``when``; ties go to the earlier one."""
        pos = bisect.bisect_left(self._times, when)
        candidates = [
            i for i in (pos - 1, pos) if 0 <= i < len(self._observations)
        ]
        if not candidates:
            raise MissingWeatherError(when)
        best = min(candidates, key=lambda i: (abs(self._times[i] - when), i))
        if abs(self._times[best] - when) > self.window:
            raise MissingWeatherError(when)
        return self._observations[best]


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray
    target: float | None
    route_id: str


def _lookup_stop(stops: Mapping[str, StopLocation], stop_id: str) -> StopLocation:
    try:
        return stops[stop_id]
    except KeyError:
        raise UnknownStopError(stop_id) from None


def encode(
    segment: TripSegment,
    weather: WeatherObservation | WeatherIndex,
    stops: Mapping[str, StopLocation],
    schema: FeatureSchema,
) -> FeatureVector:
    """
    Encode one segment into the schema's fixed layout plus route one-hot.

    The target is the next stop's deviation and is never scaled.

    Raises:
        UnknownStopError: A stop of the segment is not in ``stops``
        UnknownRouteError: The route is not in the schema vocabulary
        MissingWeatherError: No observation within an hour (index lookups)
    """
    current = _lookup_stop(stops, segment.current.stop_id)
    upcoming = _lookup_stop(stops, segment.next.stop_id)
    route_slot = schema.route_slot(segment.route_id)

    if isinstance(weather, WeatherIndex):
        observation = weather.nearest(segment.current.scheduled_time)
    else:
        observation = weather
        if abs(observation.timestamp - segment.current.scheduled_time) > WEATHER_WINDOW:
            raise MissingWeatherError(segment.current.scheduled_time)

    distance = stop_distance(current.point, upcoming.point, schema.coordinate_mode)
    named: dict[str, float] = {
        "day_type": day_type(segment.service_date),
        "rush_hour": rush_hour(segment.current.scheduled_time, schema.rush_windows),
        "lateness_status": float(segment.current_deviation > 0),
        "current_deviation": segment.current_deviation,
        "stop_distance": distance,
        "far_status": float(distance > schema.far_threshold),
        f"weather_{observation.condition.value}": 1.0,
        f"direction_{segment.direction.value}": 1.0,
        "cur_x": current.x,
        "cur_y": current.y,
        "next_x": upcoming.x,
        "next_y": upcoming.y,
        "scheduled_headway": segment.current.scheduled_headway or 0.0,
        "timepoint_order": float(segment.current.timepoint_order),
        f"point_{segment.current.point_type.value}": 1.0,
    }

    values = np.zeros(schema.total_dims, dtype=np.float64)
    for slot, name in enumerate(schema.fixed_slots):
        values[slot] = named.get(name, 0.0)
    values[route_slot] = 1.0

    return FeatureVector(
        values=values, target=segment.next_deviation, route_id=segment.route_id
    )


@dataclass(frozen=True)
class FeatureMatrix:
    """Encoded segments as arrays, row-aligned with their route and key."""

    X: np.ndarray
    y: np.ndarray
    route_ids: tuple[str, ...]
    keys: tuple[tuple[str, int], ...]
    half_trip_ids: tuple[str, ...]

    def __len__(self) -> int:
        return int(self.X.shape[0])

    def take(self, indices: Sequence[int] | np.ndarray) -> "FeatureMatrix":
        idx = np.asarray(indices, dtype=np.intp)
        return FeatureMatrix(
            X=self.X[idx],
            y=self.y[idx],
            route_ids=tuple(self.route_ids[i] for i in idx),
            keys=tuple(self.keys[i] for i in idx),
            half_trip_ids=tuple(self.half_trip_ids[i] for i in idx),
        )

    def with_inputs(self, X: np.ndarray) -> "FeatureMatrix":
        return FeatureMatrix(X, self.y, self.route_ids, self.keys, self.half_trip_ids)


def encode_segments(
    segments: Sequence[TripSegment],
    weather: WeatherIndex,
    stops: Mapping[str, StopLocation],
    schema: FeatureSchema,
    threads: int = 1,
) -> FeatureMatrix:
    """Encode many segments; rows keep the input order for any thread count."""

    def _encode(segment: TripSegment) -> FeatureVector:
        return encode(segment, weather, stops, schema)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            vectors = list(pool.map(_encode, segments, chunksize=256))
    else:
        vectors = [_encode(s) for s in segments]

    X = (
        np.vstack([v.values for v in vectors])
        if vectors
        else np.zeros((0, schema.total_dims))
    )
    y = np.array(
        [np.nan if v.target is None else v.target for v in vectors], dtype=np.float64
    )
    logger.debug(
        "Encoded %d segments into %d features", len(vectors), schema.total_dims
    )
    return FeatureMatrix(
        X=X,
        y=y,
        route_ids=tuple(s.route_id for s in segments),
        keys=tuple(s.key for s in segments),
        half_trip_ids=tuple(s.half_trip_id for s in segments),
    )


@dataclass(frozen=True)
class ScalerParams:
    minimum: np.ndarray
    maximum: np.ndarray

    def __post_init__(self) -> None:
        if self.minimum.shape != self.maximum.shape:
            msg = "Scaler min/max shapes differ"
            raise ValueError(msg)
        if np.any(self.minimum > self.maximum):
            msg = "Scaler min exceeds max"
            raise ValueError(msg)

    @property
    def dims(self) -> int:
        return int(self.minimum.shape[0])


def fit_scaler(train_vectors: np.ndarray) -> ScalerParams:
    """Per-dimension min/max over the training rows only."""
    X = np.atleast_2d(np.asarray(train_vectors, dtype=np.float64))
    if X.shape[0] == 0 or X.size == 0:
        msg = "Cannot fit a scaler on an empty training set"
        raise FeatureError(msg)
    return ScalerParams(minimum=X.min(axis=0), maximum=X.max(axis=0))


def apply_scaler(vectors: np.ndarray, params: ScalerParams) -> np.ndarray:
    """
    Min-Max scale; constant dimensions map to 0 and nothing is clipped.
    """
    X = np.asarray(vectors, dtype=np.float64)
    if X.shape[-1] != params.dims:
        msg = f"Expected {params.dims} features, got {X.shape[-1]}"
        raise FeatureError(msg)
    span = params.maximum - params.minimum
    constant = span == 0
    scaled = (X - params.minimum) / np.where(constant, 1.0, span)
    return np.where(constant, 0.0, scaled)
