from datetime import datetime

import numpy as np
import pytest

from departnet.exceptions import ConfigError, TrainingError
from departnet.features import FeatureMatrix, FeatureSchema, WeatherIndex, fit_scaler
from departnet.nn import Network, NetworkSpec
from departnet.presets import OPTIMAL_HIDDEN, get_preset
from departnet.training import (
    AblationRow,
    TrainConfig,
    ablate,
    evaluate,
    measure_latency,
    predict_departure,
    prepare_data,
    select_optimal,
    split,
    split_indices,
    train,
)
from tests.helpers import NEAR_STOPS, make_segment, observation


def _matrix(n: int, seed: int = 0, trips: int | None = None) -> FeatureMatrix:
    """y = 3·x0 − 2·x1 + 5 over uniform inputs."""
    rng = np.random.default_rng(seed)
    X = rng.uniform(0, 10, size=(n, 4))
    y = 3 * X[:, 0] - 2 * X[:, 1] + 5
    trip_ids = tuple(str(i % trips if trips else i) for i in range(n))
    return FeatureMatrix(
        X=X,
        y=y,
        route_ids=tuple("ab"[i % 2] for i in range(n)),
        keys=tuple((t, 2) for t in trip_ids),
        half_trip_ids=trip_ids,
    )


def _constant_net(value: float, input_dim: int) -> Network:
    return Network(
        NetworkSpec(input_dim),
        (np.zeros((1, input_dim)),),
        (np.array([value]),),
    )


@pytest.mark.unit
class TestSplit:
    @pytest.mark.parametrize(("n", "sizes"), [(100, (70, 20, 10)), (10, (7, 2, 1))])
    def test_sizes(self, n: int, sizes: tuple[int, int, int]) -> None:
        parts = split_indices(n)

        assert tuple(len(p) for p in parts) == sizes

    def test_disjoint_and_complete(self) -> None:
        train_idx, val_idx, test_idx = split_indices(1000, seed=5)
        combined = np.concatenate([train_idx, val_idx, test_idx])

        assert sorted(combined.tolist()) == list(range(1000))

    def test_same_seed_same_split(self) -> None:
        a = split(list(range(50)), seed=1)
        b = split(list(range(50)), seed=1)
        c = split(list(range(50)), seed=2)

        assert a == b
        assert a != c

    def test_trip_mode_keeps_trips_together(self) -> None:
        groups = [str(i // 4) for i in range(200)]

        parts = split_indices(200, seed=3, groups=groups)

        owners = [{groups[i] for i in p} for p in parts]
        assert not owners[0] & owners[1]
        assert not owners[0] & owners[2]
        assert not owners[1] & owners[2]
        assert sum(len(p) for p in parts) == 200

    def test_too_few_examples(self) -> None:
        with pytest.raises(TrainingError, match="at least 10"):
            split_indices(9)

    def test_fractions_must_sum_to_one(self) -> None:
        with pytest.raises(ConfigError):
            split_indices(100, (0.7, 0.2, 0.2))


@pytest.mark.unit
class TestTrainConfig:
    @pytest.mark.parametrize(
        "options",
        [
            {"epochs": 0},
            {"batch_size": 0},
            {"learning_rate": 0},
            {"split_mode": "route"},
        ],
    )
    def test_invalid(self, options: dict) -> None:
        with pytest.raises(TrainingError):
            TrainConfig(**options)


@pytest.mark.unit
class TestPrepareData:
    def test_scaler_sees_training_rows_only(self) -> None:
        matrix = _matrix(200)
        config = TrainConfig()

        data = prepare_data(matrix, config)

        assert (len(data.train), len(data.val), len(data.test)) == (140, 40, 20)
        assert data.train.X.min() == 0
        assert data.train.X.max() == 1
        train_keys = set(data.train.keys)
        rows = [i for i, key in enumerate(matrix.keys) if key in train_keys]
        reference = fit_scaler(matrix.X[rows])
        np.testing.assert_array_equal(data.scaler.minimum, reference.minimum)
        np.testing.assert_array_equal(data.scaler.maximum, reference.maximum)

    def test_targets_are_not_scaled(self) -> None:
        matrix = _matrix(50)

        data = prepare_data(matrix, TrainConfig())

        assert set(data.test.y) <= set(matrix.y)

    def test_unlabelled_rows_rejected(self) -> None:
        matrix = _matrix(20)
        y = matrix.y.copy()
        y[3] = np.nan

        unlabelled = FeatureMatrix(
            matrix.X, y, matrix.route_ids, matrix.keys, matrix.half_trip_ids
        )

        with pytest.raises(TrainingError, match="next-stop deviation"):
            prepare_data(unlabelled, TrainConfig())

    def test_trip_mode(self) -> None:
        matrix = _matrix(300, trips=60)

        data = prepare_data(matrix, TrainConfig(split_mode="trip"))

        assert not set(data.train.half_trip_ids) & set(data.test.half_trip_ids)


@pytest.mark.unit
class TestTrain:
    def test_learns_linear_target(self) -> None:
        data = prepare_data(_matrix(2000), TrainConfig())
        config = TrainConfig(epochs=40, batch_size=50, learning_rate=0.1)

        net, history = train(NetworkSpec(4), data.train, data.val, config)

        assert len(history) == 40
        assert history[-1].val_mse < history[0].val_mse
        assert evaluate(net, data.test).rmse < 1.0

    def test_same_seed_same_model(self) -> None:
        data = prepare_data(_matrix(300), TrainConfig())
        config = TrainConfig(epochs=2, batch_size=32)

        a, _ = train(NetworkSpec(4, (8,)), data.train, data.val, config)
        b, _ = train(NetworkSpec(4, (8,)), data.train, data.val, config)

        for p, q in zip(a.parameters(), b.parameters()):
            np.testing.assert_array_equal(p, q)

    def test_width_mismatch(self) -> None:
        data = prepare_data(_matrix(50), TrainConfig())

        with pytest.raises(TrainingError, match="expects 5 inputs"):
            train(NetworkSpec(5), data.train, None, TrainConfig())

    def test_without_validation(self) -> None:
        data = prepare_data(_matrix(50), TrainConfig())

        _, history = train(NetworkSpec(4), data.train, None, TrainConfig(epochs=1))

        assert history[0].val_mse is None


@pytest.mark.unit
class TestEvaluate:
    def test_constant_predictor(self) -> None:
        matrix = _matrix(40)

        report = evaluate(_constant_net(0.0, 4), matrix)

        assert report.rmse == report.baseline_rmse
        assert report.n_test == 40
        assert set(report.per_route) == {"a", "b"}
        assert report.mae <= report.rmse

    def test_all_zero_targets_leave_mape_undefined(self) -> None:
        matrix = _matrix(10)
        zeros = FeatureMatrix(
            matrix.X, np.zeros(10), matrix.route_ids, matrix.keys, matrix.half_trip_ids
        )

        report = evaluate(_constant_net(1.0, 4), zeros)

        assert report.mape is None
        assert report.mape_excluded == 10
        assert report.rmse == 1.0

    def test_dict_round_trip(self) -> None:
        report = evaluate(_constant_net(2.0, 4), _matrix(30))

        assert type(report).from_dict(report.to_dict()) == report


@pytest.mark.unit
class TestPredictDeparture:
    @pytest.mark.parametrize(
        ("deviation", "expected"),
        [(120.0, datetime(2023, 1, 9, 10, 2)), (-60.0, datetime(2023, 1, 9, 9, 59))],
    )
    def test_scheduled_plus_deviation(
        self, deviation: float, expected: datetime
    ) -> None:
        schema = FeatureSchema.from_routes(["32"])
        segment = make_segment(
            route_id="32", scheduled=datetime(2023, 1, 9, 9, 56), next_deviation=None
        )
        weather = WeatherIndex([observation(datetime(2023, 1, 9, 10, 0))])
        scaler = fit_scaler(np.zeros((2, schema.total_dims)))

        net = _constant_net(deviation, schema.total_dims)

        prediction = predict_departure(
            net, scaler, schema, segment, weather, NEAR_STOPS
        )

        assert prediction.scheduled_time == datetime(2023, 1, 9, 10, 0)
        assert prediction.deviation == deviation
        assert prediction.predicted_time == expected
        assert prediction.next_stop_id == "B"


@pytest.mark.unit
def test_measure_latency() -> None:
    net = _constant_net(0.0, 4)

    assert measure_latency(net, np.zeros((5, 4))) > 0
    assert measure_latency(net, np.zeros((0, 4))) == 0


@pytest.mark.unit
class TestAblation:
    def test_rows_share_split_and_report_size(self) -> None:
        data = prepare_data(_matrix(200), TrainConfig())
        specs = [NetworkSpec(4), NetworkSpec(4, (8,))]

        rows = ablate(specs, data, TrainConfig(epochs=2, batch_size=40))

        assert [r.spec for r in rows] == specs
        assert [r.params for r in rows] == [5, 49]
        assert [r.macs for r in rows] == [4, 40]
        assert all(r.flops == r.macs * 1000 for r in rows)
        assert all(len(r.history) == 2 for r in rows)

    def test_select_smallest_within_tolerance(self) -> None:
        def row(hidden: tuple[int, ...], params: int, val: float) -> AblationRow:
            return AblationRow(NetworkSpec(173, hidden), val + 1, val, params, 0, 0)

        rows = [
            row((256,), 44_801, 80.5),
            row((512, 128, 64), 163_073, 80.0),
            row((1024,), 200_000, 79.5),
        ]

        assert select_optimal(rows).params == 44_801
        assert select_optimal(rows, tolerance=0.001).params == 200_000

    def test_select_from_nothing(self) -> None:
        with pytest.raises(TrainingError):
            select_optimal([])


@pytest.mark.unit
class TestPresets:
    def test_ablation_preset(self) -> None:
        specs = get_preset("ablation")

        assert len(specs) == 7
        assert all(s.input_dim == 173 for s in specs)

    def test_optimal_and_baseline(self) -> None:
        assert get_preset("optimal")[0].hidden == OPTIMAL_HIDDEN
        assert get_preset("baseline")[0].hidden == ()
        assert len(get_preset("ablation+baseline")) == 8

    def test_unknown_preset(self) -> None:
        with pytest.raises(ConfigError, match="Unknown architecture preset"):
            get_preset("huge")
