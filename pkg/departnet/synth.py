"""
Synthetic departure datasets with a known deviation process.

``generate`` writes the three input files in the formats ``ingest`` reads,
plus a ground-truth file with each segment's noise-free next-stop deviation.

Processes (d = current deviation in seconds, dist in meters, rush in {0, 1})::

    linear:     next = 0.8·d + 0.02·dist + 60·rush + noise
    nonlinear:  linear + gain[route]·d + 0.05·rush·dist

``gain[route]`` is drawn once per route, so the nonlinear process mixes the
route one-hot with the deviation and rush with distance. Neither product
is reachable by a linear model over the encoded features.
"""

import logging
import math
from collections.abc import Mapping
from dataclasses import dataclass
from datetime import date, datetime, time, timedelta
from pathlib import Path

import numpy as np
import pandas as pd

from departnet.exceptions import MetricError, SynthError
from departnet.features import rush_hour, stop_distance
from departnet.seeding import derive_seed

logger = logging.getLogger(__name__)

# Stop coordinates stay inside this box (degrees)
LAT_RANGE = (42.23, 42.40)
LON_RANGE = (-71.19, -70.99)
HOP_RANGE_M = (350.0, 2400.0)
METERS_PER_DEGREE_LAT = 111_195.0
BUS_SPEED_MPS = 6.0
DWELL_S = 30
PROCESSES = ("linear", "nonlinear")
MAX_ROUTES = 999

RAW_CONDITIONS = (
    "Clear",
    "Partially cloudy",
    "Overcast",
    "Rain",
    "Rain, Overcast",
    "Rain, Partially cloudy",
    "Snow",
    "Snow, Overcast",
    "Windy",
    "Wind, Partially cloudy",
)

DEPARTURES_FILE = "departures.csv"
WEATHER_FILE = "weather.csv"
STOPS_FILE = "stops.csv"
GROUND_TRUTH_FILE = "ground_truth.csv"


@dataclass(frozen=True)
class SynthConfig:
    n_routes: int = 8
    stops_min: int = 2
    stops_max: int = 14
    n_trips: int = 1000
    noise_std: float = 30.0
    seed: int = 0
    process: str = "linear"
    start_date: date = date(2023, 1, 1)
    n_days: int = 90

    def __post_init__(self) -> None:
        if not 2 <= self.stops_min <= self.stops_max <= 14:
            msg = (
                "stops per trip must satisfy 2 <= min <= max <= 14, "
                f"got [{self.stops_min}, {self.stops_max}]"
            )
            raise SynthError(msg)
        if not 1 <= self.n_routes <= MAX_ROUTES:
            msg = f"n_routes must be in [1, {MAX_ROUTES}], got {self.n_routes}"
            raise SynthError(msg)
        if self.n_trips < 1 or self.n_days < 1:
            msg = "n_trips and n_days must be >= 1"
            raise SynthError(msg)
        if self.noise_std < 0:
            msg = f"noise_std must be >= 0, got {self.noise_std}"
            raise SynthError(msg)
        if self.process not in PROCESSES:
            msg = f"process must be one of {PROCESSES}, got {self.process!r}"
            raise SynthError(msg)


@dataclass(frozen=True)
class SynthResult:
    departures: Path
    weather: Path
    stops: Path
    ground_truth: Path

    @property
    def files(self) -> tuple[Path, ...]:
        return (self.departures, self.weather, self.stops, self.ground_truth)


@dataclass(frozen=True)
class _Route:
    route_id: str
    stop_ids: tuple[str, ...]
    points: tuple[tuple[float, float], ...]
    gain: float


def _build_routes(config: SynthConfig, rng: np.random.Generator) -> list[_Route]:
    picks = rng.choice(
        np.arange(1, MAX_ROUTES + 1), size=config.n_routes, replace=False
    )
    numbers = sorted(int(n) for n in picks)
    routes = []
    next_stop = 1000
    for number in numbers:
        lat = rng.uniform(*LAT_RANGE)
        lon = rng.uniform(*LON_RANGE)
        heading = rng.uniform(0, 2 * math.pi)
        points = [(float(lon), float(lat))]
        for _ in range(13):
            heading += rng.normal(0, 0.4)
            hop = rng.uniform(*HOP_RANGE_M)
            dlat = hop * math.cos(heading) / METERS_PER_DEGREE_LAT
            dlon = hop * math.sin(heading) / (
                METERS_PER_DEGREE_LAT * math.cos(math.radians(lat))
            )
            if not LAT_RANGE[0] <= lat + dlat <= LAT_RANGE[1]:
                dlat = -dlat
                heading = math.pi - heading
            if not LON_RANGE[0] <= lon + dlon <= LON_RANGE[1]:
                dlon = -dlon
                heading = -heading
            lat += dlat
            lon += dlon
            points.append((float(lon), float(lat)))
        stop_ids = tuple(str(next_stop + i) for i in range(len(points)))
        next_stop += len(points)
        routes.append(
            _Route(str(number), stop_ids, tuple(points), float(rng.uniform(-0.3, 0.3)))
        )
    return routes


def _next_deviation(
    process: str, current: float, distance: float, rush: int, gain: float
) -> float:
    value = 0.8 * current + 0.02 * distance + 60.0 * rush
    if process == "nonlinear":
        value += gain * current + 0.05 * rush * distance
    return value


def _format(ts: datetime) -> str:
    return ts.isoformat(sep=" ")


def _trip_rows(
    index: int, config: SynthConfig, routes: list[_Route], base_seed: int
) -> tuple[list[list[str]], list[tuple[str, int, float]]]:
    rng = np.random.default_rng([base_seed, index])
    route = routes[int(rng.integers(len(routes)))]
    outbound = bool(rng.integers(2))
    length = int(rng.integers(config.stops_min, config.stops_max + 1))
    service_date = config.start_date + timedelta(days=int(rng.integers(config.n_days)))
    start_minute = int(rng.integers(5 * 60, 22 * 60))
    headway = float(rng.choice([600.0, 900.0, 1200.0]))

    sequence = list(zip(route.stop_ids, route.points))
    stops = (sequence if outbound else sequence[::-1])[:length]
    half_trip_id = str(600000 + index)
    direction = "Outbound" if outbound else "Inbound"

    scheduled = datetime.combine(service_date, time()) + timedelta(minutes=start_minute)
    actual = scheduled + timedelta(seconds=float(rng.normal(120.0, 90.0)))
    rows: list[list[str]] = []
    truth: list[tuple[str, int, float]] = []
    for position, (stop_id, point) in enumerate(stops):
        point_type = (
            "Startpoint"
            if position == 0
            else "Endpoint"
            if position == length - 1
            else "Midpoint"
        )
        rows.append(
            [
                service_date.isoformat(),
                route.route_id,
                direction,
                half_trip_id,
                stop_id,
                f"tp{stop_id}",
                str(position + 1),
                point_type,
                "Schedule",
                _format(scheduled),
                _format(actual),
                repr(headway),
                repr(headway),
            ]
        )
        if position == length - 1:
            break

        next_point = stops[position + 1][1]
        distance = stop_distance(point, next_point)
        current = (actual - scheduled).total_seconds()
        true_next = _next_deviation(
            config.process, current, distance, rush_hour(scheduled), route.gain
        )
        truth.append((half_trip_id, position + 2, true_next))

        scheduled += timedelta(seconds=round(distance / BUS_SPEED_MPS) + DWELL_S)
        noise = config.noise_std * rng.normal() if config.noise_std else 0.0
        observed = true_next + noise
        actual = scheduled + timedelta(seconds=observed)
    return rows, truth


def _weather_rows(config: SynthConfig, rng: np.random.Generator) -> list[list[str]]:
    start = datetime.combine(config.start_date, time())
    hours = (config.n_days + 1) * 24
    rows = []
    for hour in range(hours):
        rows.append(
            [
                _format(start + timedelta(hours=hour)),
                RAW_CONDITIONS[int(rng.integers(len(RAW_CONDITIONS)))],
                repr(round(float(rng.normal(1.0, 6.0)), 1)),
                repr(round(float(rng.uniform(40, 95)), 1)),
                repr(round(float(rng.uniform(0, 40)), 1)),
            ]
        )
    return rows


def generate(config: SynthConfig, directory: str | Path) -> SynthResult:
    """
    Write departures, weather, stops and ground-truth files into ``directory``.

    Output bytes depend only on ``config``.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    base_seed = derive_seed(config.seed, "synth")
    routes = _build_routes(config, np.random.default_rng([base_seed, 0, 0]))

    departures: list[list[str]] = []
    truth: list[tuple[str, int, float]] = []
    for index in range(config.n_trips):
        rows, trip_truth = _trip_rows(index, config, routes, base_seed)
        departures.extend(rows)
        truth.extend(trip_truth)

    result = SynthResult(
        departures=directory / DEPARTURES_FILE,
        weather=directory / WEATHER_FILE,
        stops=directory / STOPS_FILE,
        ground_truth=directory / GROUND_TRUTH_FILE,
    )
    pd.DataFrame(
        departures,
        columns=[
            "service_date",
            "route_id",
            "direction_id",
            "half_trip_id",
            "stop_id",
            "time_point_id",
            "time_point_order",
            "point_type",
            "standard_type",
            "scheduled",
            "actual",
            "scheduled_headway",
            "headway",
        ],
    ).to_csv(result.departures, index=False)
    pd.DataFrame(
        _weather_rows(config, np.random.default_rng([base_seed, 0, 1])),
        columns=["datetime", "conditions", "temp", "humidity", "windspeed"],
    ).to_csv(result.weather, index=False)
    pd.DataFrame(
        [
            (stop_id, repr(x), repr(y), f"Route {route.route_id} stop {k + 1}")
            for route in routes
            for k, (stop_id, (x, y)) in enumerate(zip(route.stop_ids, route.points))
        ],
        columns=["stop_id", "x", "y", "name"],
    ).to_csv(result.stops, index=False)
    pd.DataFrame(
        [(h, o, repr(v)) for h, o, v in truth],
        columns=["half_trip_id", "timepoint_order", "true_deviation_s"],
    ).to_csv(result.ground_truth, index=False)

    logger.debug(
        "Generated %d trips, %d departures, %d segments (%s process)",
        config.n_trips,
        len(departures),
        len(truth),
        config.process,
    )
    return result


def read_ground_truth(path: str | Path) -> dict[tuple[str, int], float]:
    frame = pd.read_csv(path, dtype={"half_trip_id": str})
    return {
        (row.half_trip_id, int(row.timepoint_order)): float(row.true_deviation_s)
        for row in frame.itertuples(index=False)
    }


def oracle_rmse(
    ground_truth: Mapping[tuple[str, int], float],
    predictions: Mapping[tuple[str, int], float],
) -> float:
    """
    RMSE of predictions against the noise-free deviations, keyed by
    (half_trip_id, timepoint_order). Pure-Python arithmetic.

    Raises:
        MetricError: The two key sets differ, or both are empty
    """
    if ground_truth.keys() != predictions.keys():
        missing = len(ground_truth.keys() - predictions.keys())
        extra = len(predictions.keys() - ground_truth.keys())
        msg = (
            f"Misaligned identities: {missing} missing, "
            f"{extra} unexpected predictions"
        )
        raise MetricError(msg)
    if not ground_truth:
        msg = "oracle_rmse needs at least one prediction"
        raise MetricError(msg)
    squared = [(ground_truth[key] - predictions[key]) ** 2 for key in ground_truth]
    return math.sqrt(math.fsum(squared) / len(squared))
