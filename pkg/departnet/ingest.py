"""
Readers for the three source datasets: departures, weather and stops.

Departure and weather rows that cannot be parsed are returned as
``Reject`` values; only whole-file problems (a missing header column,
conflicting stop coordinates) raise.
"""

import io
import logging
import re
from collections.abc import Iterable
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Union

import numpy as np
import pandas as pd

from departnet.exceptions import HeaderError, IngestError, StopConflictError
from departnet.records import (
    DepartureRecord,
    Direction,
    PointType,
    Reject,
    StandardType,
    StopLocation,
    WeatherCondition,
    WeatherObservation,
)

logger = logging.getLogger(__name__)

Source = Union[str, Path, IO[str]]

DEPARTURE_COLUMNS = (
    "service_date",
    "route_id",
    "direction",
    "half_trip_id",
    "stop_id",
    "timepoint_id",
    "timepoint_order",
    "point_type",
    "standard_type",
    "scheduled_time",
    "actual_time",
    "scheduled_headway",
    "headway",
)

# Column names used by the public MBTA and Visual Crossing exports
HEADER_ALIASES = {
    "direction_id": "direction",
    "time_point_id": "timepoint_id",
    "time_point_order": "timepoint_order",
    "scheduled": "scheduled_time",
    "actual": "actual_time",
    "datetime": "timestamp",
    "conditions": "condition",
    "temp": "temperature",
    "windspeed": "wind_speed",
    "stop_lon": "x",
    "stop_lat": "y",
    "stop_name": "name",
}

# Checked in order; the first category with a matching keyword wins
CONDITION_KEYWORDS: tuple[tuple[WeatherCondition, tuple[str, ...]], ...] = (
    (WeatherCondition.SNOWY, ("snow", "sleet", "ice", "freezing", "blizzard")),
    (WeatherCondition.RAINY, ("rain", "drizzle", "shower", "thunder", "storm")),
    (WeatherCondition.WINDY, ("wind", "gust")),
    (WeatherCondition.CLOUDY, ("cloud", "overcast", "fog", "mist", "haze")),
    (WeatherCondition.CLEAR, ("clear", "sun", "fair")),
)

# MBTA exports carry time-of-day on this placeholder date
_TIME_EPOCH = pd.Timestamp("1900-01-01")

_OVERFLOW_MARK = "\x00overflow"


@dataclass(frozen=True)
class ParseConfig:
    delimiter: str = ","


def _canonical(name: str) -> str:
    key = re.sub(r"[\s\-]+", "_", str(name).strip().lower())
    return HEADER_ALIASES.get(key, key)


@dataclass(frozen=True)
class _Table:
    """A parsed file plus the raw text of rows with the wrong field count."""

    frame: pd.DataFrame
    misshapen: dict[int, str]

    def raw_rows(self, delimiter: str) -> list[str]:
        raw = [
            delimiter.join(row)
            for row in self.frame.itertuples(index=False, name=None)
        ]
        for position, text in self.misshapen.items():
            raw[position] = text
        return raw

    def misshapen_mask(self) -> pd.Series:
        mask = np.zeros(len(self.frame), dtype=bool)
        mask[list(self.misshapen)] = True
        return pd.Series(mask, index=self.frame.index)


def _read_text(source: Source) -> str:
    if isinstance(source, (str, Path)):
        return Path(source).read_text(encoding="utf-8-sig")
    return source.read()


def _read_table(source: Source, config: ParseConfig) -> _Table:
    try:
        text = _read_text(source)
        width = len(
            pd.read_csv(io.StringIO(text), sep=config.delimiter, nrows=0).columns
        )
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        msg = f"Could not read delimited text: {e}"
        raise IngestError(msg) from e

    # Over-long rows keep their position as a marked placeholder row
    overflow: list[str] = []

    def _hold_overflow(fields: list[str]) -> list[str]:
        overflow.append(config.delimiter.join(fields))
        return [_OVERFLOW_MARK] * width

    # A full-width first row stops pandas reading an over-long row as an index
    header, _, body = text.partition("\n")
    guarded = "\n".join((header, config.delimiter.join(["-"] * width), body))
    try:
        frame = pd.read_csv(
            io.StringIO(guarded),
            sep=config.delimiter,
            dtype=str,
            keep_default_na=False,
            skip_blank_lines=False,
            engine="python",
            on_bad_lines=_hold_overflow,
        )
    except pd.errors.ParserError as e:
        msg = f"Could not read delimited text: {e}"
        raise IngestError(msg) from e
    frame = frame.iloc[1:].reset_index(drop=True)
    frame.columns = [_canonical(c) for c in frame.columns]

    # Short rows come back padded with NaN; an empty line is NaN throughout
    padded = frame.isna()
    short = (padded.any(axis=1) & ~padded.all(axis=1)).to_numpy()
    misshapen = {
        int(i): config.delimiter.join(v for v in row if isinstance(v, str))
        for i, row in zip(
            np.flatnonzero(short),
            frame[short].itertuples(index=False, name=None),
            strict=True,
        )
    }
    placeholders = np.flatnonzero(frame.eq(_OVERFLOW_MARK).all(axis=1))
    misshapen.update(zip((int(i) for i in placeholders), overflow, strict=True))

    frame = frame.fillna("").replace(_OVERFLOW_MARK, "")
    if misshapen:
        logger.debug("%d rows with the wrong field count", len(misshapen))
    return _Table(frame, dict(sorted(misshapen.items())))


def _require_columns(frame: pd.DataFrame, columns: Iterable[str]) -> None:
    for column in columns:
        if column not in frame.columns:
            raise HeaderError(column)


def _line_numbers(frame: pd.DataFrame) -> np.ndarray:
    # Header occupies line 1
    return np.arange(len(frame)) + 2


def _parse_timestamps(text: pd.Series, anchor: pd.Series | None = None) -> pd.Series:
    """Parse wall-clock timestamps; a trailing 'Z' is ignored (no tz math)."""
    cleaned = text.str.strip().str.replace(r"Z$", "", regex=True)
    parsed = pd.to_datetime(cleaned, errors="coerce", format="ISO8601")
    if anchor is not None:
        on_epoch = parsed.notna() & (parsed.dt.year == 1900)
        if on_epoch.any():
            parsed = parsed.where(~on_epoch, anchor + (parsed - _TIME_EPOCH))
    return parsed


def _parse_enum(text: pd.Series, enum_type: type) -> pd.Series:
    lookup = {member.value: member for member in enum_type}
    return text.str.strip().str.lower().map(lookup)


def _parse_optional_number(text: pd.Series) -> tuple[pd.Series, pd.Series]:
    """Return (values, bad_mask); empty cells are valid and become NaN."""
    stripped = text.str.strip()
    values = pd.to_numeric(stripped, errors="coerce")
    bad = (stripped != "") & values.isna()
    return values, bad


def _optional(value: float) -> float | None:
    return None if np.isnan(value) else float(value)


def parse_departures(
    source: Source, config: ParseConfig | None = None
) -> tuple[list[DepartureRecord], list[Reject]]:
    """
    Parse the 13-field departures table.

    Every input row ends up exactly once in either the returned records or
    the rejects, in file order.

    Raises:
        HeaderError: A required column is missing from the header
    """
    config = config or ParseConfig()
    table = _read_table(source, config)
    _require_columns(table.frame, DEPARTURE_COLUMNS)
    frame = table.frame.loc[:, list(DEPARTURE_COLUMNS)]

    text = {name: frame[name].str.strip() for name in DEPARTURE_COLUMNS}

    service_date = pd.to_datetime(
        text["service_date"], errors="coerce", format="ISO8601"
    ).dt.normalize()
    direction = _parse_enum(text["direction"], Direction)
    point_type = _parse_enum(text["point_type"], PointType)
    standard_type = _parse_enum(text["standard_type"], StandardType)
    order = pd.to_numeric(text["timepoint_order"], errors="coerce")
    scheduled = _parse_timestamps(text["scheduled_time"], service_date)
    actual = _parse_timestamps(text["actual_time"], service_date)
    scheduled_headway, bad_scheduled_headway = _parse_optional_number(
        text["scheduled_headway"]
    )
    headway, bad_headway = _parse_optional_number(text["headway"])

    blank = pd.DataFrame(text).eq("").all(axis=1)
    checks: list[tuple[pd.Series, str]] = [
        (table.misshapen_mask(), "bad_field_count"),
        (blank, "blank_row"),
        (service_date.isna(), "bad_service_date"),
        (text["route_id"] == "", "missing_route_id"),
        (text["half_trip_id"] == "", "missing_half_trip_id"),
        (direction.isna(), "bad_direction"),
        (point_type.isna(), "bad_point_type"),
        (standard_type.isna(), "bad_standard_type"),
        (text["stop_id"] == "", "missing_stop_id"),
        (order.isna() | (order % 1 != 0), "bad_timepoint_order"),
        (order < 1, "timepoint_order_below_one"),
        (text["scheduled_time"] == "", "missing_scheduled_time"),
        (scheduled.isna(), "bad_scheduled_time"),
        (text["actual_time"] == "", "missing_actual_time"),
        (actual.isna(), "bad_actual_time"),
        (bad_scheduled_headway, "bad_scheduled_headway"),
        (bad_headway, "bad_headway"),
    ]

    reasons = pd.Series("", index=frame.index, dtype=object)
    for failed, reason in checks:
        reasons = reasons.mask((reasons == "") & failed.to_numpy(), reason)

    valid = (reasons == "").to_numpy()
    line_numbers = _line_numbers(frame)
    raw = table.raw_rows(config.delimiter)

    rejects = [
        Reject(line_no=int(line_numbers[i]), reason=reasons.iloc[i], raw_row=raw[i])
        for i in np.flatnonzero(~valid)
    ]

    records = [
        DepartureRecord(
            service_date=service_date.iloc[i].date(),
            route_id=text["route_id"].iloc[i],
            direction=direction.iloc[i],
            half_trip_id=text["half_trip_id"].iloc[i],
            stop_id=text["stop_id"].iloc[i],
            timepoint_id=text["timepoint_id"].iloc[i],
            timepoint_order=int(order.iloc[i]),
            point_type=point_type.iloc[i],
            standard_type=standard_type.iloc[i],
            scheduled_time=scheduled.iloc[i].to_pydatetime(),
            actual_time=actual.iloc[i].to_pydatetime(),
            scheduled_headway=_optional(scheduled_headway.iloc[i]),
            headway=_optional(headway.iloc[i]),
        )
        for i in np.flatnonzero(valid)
    ]

    logger.debug(
        "Parsed %d departure rows: %d records, %d rejects",
        len(frame),
        len(records),
        len(rejects),
    )
    return records, rejects


def map_condition(raw: str) -> WeatherCondition | None:
    """Map a provider condition string onto the five weather categories."""
    lowered = raw.strip().lower()
    for condition, keywords in CONDITION_KEYWORDS:
        if any(keyword in lowered for keyword in keywords):
            return condition
    return None


def parse_weather(
    source: Source, config: ParseConfig | None = None
) -> tuple[list[WeatherObservation], list[Reject]]:
    """Parse hourly weather observations; unmappable conditions are rejected."""
    config = config or ParseConfig()
    table = _read_table(source, config)
    frame = table.frame
    _require_columns(frame, ("timestamp", "condition"))

    timestamps = _parse_timestamps(frame["timestamp"])
    optional = {
        name: _parse_optional_number(frame[name])[0]
        if name in frame.columns
        else pd.Series(np.nan, index=frame.index)
        for name in ("temperature", "humidity", "wind_speed")
    }
    line_numbers = _line_numbers(frame)
    raw = table.raw_rows(config.delimiter)

    observations: list[WeatherObservation] = []
    rejects: list[Reject] = []
    for i, condition_text in enumerate(frame["condition"]):
        if i in table.misshapen:
            rejects.append(Reject(int(line_numbers[i]), "bad_field_count", raw[i]))
            continue
        if pd.isna(timestamps.iloc[i]):
            rejects.append(Reject(int(line_numbers[i]), "bad_timestamp", raw[i]))
            continue
        condition = map_condition(condition_text)
        if condition is None:
            reason = f"unmapped_condition:{condition_text.strip()}"
            rejects.append(Reject(int(line_numbers[i]), reason, raw[i]))
            continue
        observations.append(
            WeatherObservation(
                timestamp=timestamps.iloc[i].to_pydatetime(),
                condition=condition,
                temperature=_optional(optional["temperature"].iloc[i]),
                humidity=_optional(optional["humidity"].iloc[i]),
                wind_speed=_optional(optional["wind_speed"].iloc[i]),
            )
        )

    logger.debug(
        "Parsed %d weather rows: %d observations, %d rejects",
        len(frame),
        len(observations),
        len(rejects),
    )
    return observations, rejects


def parse_stops(
    source: Source, config: ParseConfig | None = None
) -> dict[str, StopLocation]:
    """
    Parse the stop locations table into a map keyed by stop_id.

    Identical duplicate rows collapse silently.

    Raises:
        HeaderError: stop_id, x or y column missing
        IngestError: A coordinate is not a number, or a row is misshapen
        StopConflictError: Duplicate stop_id with different coordinates
    """
    config = config or ParseConfig()
    table = _read_table(source, config)
    frame = table.frame
    _require_columns(frame, ("stop_id", "x", "y"))
    if table.misshapen:
        line = min(table.misshapen) + 2
        msg = f"Line {line}: wrong number of fields in the stops table"
        raise IngestError(msg)

    xs = pd.to_numeric(frame["x"].str.strip(), errors="coerce")
    ys = pd.to_numeric(frame["y"].str.strip(), errors="coerce")
    names = (
        frame["name"] if "name" in frame.columns else pd.Series("", index=frame.index)
    )
    line_numbers = _line_numbers(frame)
    raw = table.raw_rows(config.delimiter)

    stops: dict[str, StopLocation] = {}
    first_seen: dict[str, str] = {}
    for i, stop_id in enumerate(frame["stop_id"].str.strip()):
        if not stop_id:
            continue
        if np.isnan(xs.iloc[i]) or np.isnan(ys.iloc[i]):
            msg = f"Line {line_numbers[i]}: non-numeric coordinates for stop {stop_id}"
            raise IngestError(msg)

        location = StopLocation(
            stop_id=stop_id,
            x=float(xs.iloc[i]),
            y=float(ys.iloc[i]),
            name=names.iloc[i].strip(),
        )
        existing = stops.get(stop_id)
        if existing is None:
            stops[stop_id] = location
            first_seen[stop_id] = f"line {line_numbers[i]}: {raw[i]}"
        elif existing.point != location.point:
            raise StopConflictError(
                stop_id, first_seen[stop_id], f"line {line_numbers[i]}: {raw[i]}"
            )

    logger.debug("Parsed %d stop rows into %d stops", len(frame), len(stops))
    return stops


def write_rejects(rejects: list[Reject], path: str | Path) -> Path:
    """Write the reject report as delimited text (line_no, reason, raw_row)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    table = pd.DataFrame(
        [(r.line_no, r.reason, r.raw_row) for r in rejects],
        columns=["line_no", "reason", "raw_row"],
    )
    table.to_csv(path, index=False)
    return path
