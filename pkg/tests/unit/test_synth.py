import numpy as np
import pytest

from departnet.exceptions import MetricError, SynthError
from departnet.features import (
    FeatureSchema,
    WeatherIndex,
    apply_scaler,
    encode_segments,
    fit_scaler,
)
from departnet.ingest import parse_departures, parse_stops, parse_weather
from departnet.metrics import rmse
from departnet.preprocess import assemble_trips, segment_trips
from departnet.synth import SynthConfig, generate, oracle_rmse, read_ground_truth
from departnet.training import split_indices


def _pipeline(result):
    records, rejects = parse_departures(result.departures)
    observations, weather_rejects = parse_weather(result.weather)
    stops = parse_stops(result.stops)
    segments = segment_trips(assemble_trips(records))
    weather = WeatherIndex(observations)
    return records, rejects, weather, weather_rejects, stops, segments


@pytest.mark.unit
class TestSynthConfig:
    @pytest.mark.parametrize(
        "options",
        [
            {"stops_min": 1},
            {"stops_max": 15},
            {"stops_min": 6, "stops_max": 5},
            {"n_routes": 0},
            {"n_trips": 0},
            {"noise_std": -1.0},
            {"process": "cubic"},
        ],
    )
    def test_invalid(self, options: dict) -> None:
        with pytest.raises(SynthError):
            SynthConfig(**options)


@pytest.mark.unit
class TestGenerate:
    def test_files_parse_cleanly(self, tmp_path) -> None:
        result = generate(SynthConfig(n_trips=100), tmp_path)

        records, rejects, weather, weather_rejects, stops, segments = _pipeline(result)

        assert all(path.exists() for path in result.files)
        assert rejects == []
        assert weather_rejects == []
        assert {r.stop_id for r in records} <= stops.keys()
        assert 100 <= len(segments) <= 1300
        assert len(read_ground_truth(result.ground_truth)) == len(segments)
        assert len({r.route_id for r in records}) <= 8

    def test_trip_lengths_respect_range(self, tmp_path) -> None:
        result = generate(SynthConfig(n_trips=200, stops_min=3, stops_max=5), tmp_path)

        trips = assemble_trips(parse_departures(result.departures)[0])

        assert {len(t) for t in trips} <= {3, 4, 5}
        assert len(trips) == 200

    def test_same_seed_same_bytes(self, tmp_path) -> None:
        a = generate(SynthConfig(n_trips=50, seed=7), tmp_path / "a")
        b = generate(SynthConfig(n_trips=50, seed=7), tmp_path / "b")

        for left, right in zip(a.files, b.files):
            assert left.read_bytes() == right.read_bytes()

    def test_seed_changes_data(self, tmp_path) -> None:
        a = generate(SynthConfig(n_trips=50, seed=1), tmp_path / "a")
        b = generate(SynthConfig(n_trips=50, seed=2), tmp_path / "b")

        assert a.departures.read_bytes() != b.departures.read_bytes()

    def test_noise_free_linear_process_is_solvable(self, tmp_path) -> None:
        config = SynthConfig(n_trips=400, noise_std=0.0, process="linear")
        _, _, weather, _, stops, segments = _pipeline(generate(config, tmp_path))
        schema = FeatureSchema.from_routes(s.route_id for s in segments)
        matrix = encode_segments(segments, weather, stops, schema)
        train_idx, _, test_idx = split_indices(len(matrix), seed=0)

        scaler = fit_scaler(matrix.X[train_idx])
        design = np.column_stack([apply_scaler(matrix.X, scaler), np.ones(len(matrix))])
        coef, *_ = np.linalg.lstsq(design[train_idx], matrix.y[train_idx], rcond=None)

        assert rmse(design[test_idx] @ coef, matrix.y[test_idx]) < 1e-6

    def test_noise_free_targets_match_ground_truth(self, tmp_path) -> None:
        result = generate(SynthConfig(n_trips=60, noise_std=0.0), tmp_path)
        segments = _pipeline(result)[-1]
        truth = read_ground_truth(result.ground_truth)

        observed = {s.key: s.next_deviation for s in segments}

        assert oracle_rmse(truth, observed) < 1e-6


@pytest.mark.unit
class TestOracleRmse:
    def test_perfect_predictions(self) -> None:
        truth = {("1", 2): 30.0, ("1", 3): -12.5}

        assert oracle_rmse(truth, dict(truth)) == 0

    def test_single_pair(self) -> None:
        assert oracle_rmse({("1", 2): 10.0}, {("1", 2): 15.0}) == 5

    def test_agrees_with_rmse(self) -> None:
        rng = np.random.default_rng(4)
        actual, predicted = rng.normal(200, 150, size=(2, 1000))
        keys = [(str(i), 2) for i in range(1000)]

        value = oracle_rmse(dict(zip(keys, actual)), dict(zip(keys, predicted)))

        assert value == pytest.approx(rmse(predicted, actual), rel=1e-9)

    def test_misaligned(self) -> None:
        with pytest.raises(MetricError, match="Misaligned"):
            oracle_rmse({("1", 2): 1.0}, {("1", 3): 1.0})

    def test_empty(self) -> None:
        with pytest.raises(MetricError):
            oracle_rmse({}, {})
