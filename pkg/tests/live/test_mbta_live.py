import os
from pathlib import Path

import pytest

import departnet as dn
from departnet.ingest import parse_departures
from tests.reference_values import MBTA_DIR_ENV


@pytest.fixture(scope="module")
def mbta_dir() -> Path:
    """
    Directory with a real MBTA export: departures.csv (arrival/departure
    times), weather.csv (hourly Visual Crossing) and stops.txt (GTFS).
    """
    value = os.environ.get(MBTA_DIR_ENV)
    if not value:
        pytest.skip(f"{MBTA_DIR_ENV} is not set")
    return Path(value)


@pytest.fixture(scope="module")
def preprocessed(mbta_dir: Path, tmp_path_factory) -> dn.PreprocessResult:
    run = dn.RunConfig(
        departures=mbta_dir / "departures.csv",
        weather=mbta_dir / "weather.csv",
        stops=mbta_dir / "stops.txt",
        workdir=tmp_path_factory.mktemp("mbta"),
    )
    return dn.run_preprocess(run)


@pytest.mark.live
def test_mbta_export_parses(mbta_dir: Path) -> None:
    records, rejects = parse_departures(mbta_dir / "departures.csv")

    assert len(records) > 0, "No departure rows parsed"
    assert len(rejects) < 0.05 * (len(records) + len(rejects)), (
        f"{len(rejects)} rows rejected, first: {rejects[0] if rejects else None}"
    )


@pytest.mark.live
def test_mbta_outlier_band(preprocessed: dn.PreprocessResult) -> None:
    stats = preprocessed.stats

    assert stats.low < stats.mean < stats.high
    assert preprocessed.dropped < 0.1 * preprocessed.records


@pytest.mark.live
def test_mbta_buses_mostly_run_late(preprocessed: dn.PreprocessResult) -> None:
    assert 0.5 < preprocessed.summary.delayed_fraction < 0.95


@pytest.mark.live
def test_mbta_segments(preprocessed: dn.PreprocessResult) -> None:
    assert 0 < preprocessed.segments < preprocessed.records
    assert preprocessed.trips <= preprocessed.summary.trips
