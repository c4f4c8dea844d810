"""
Splitting, mini-batch Adam training, evaluation, ablation and the
next-stop departure time predictor.
"""

import logging
import math
import time
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from typing import Any, TypeVar

import numpy as np

from departnet.exceptions import ConfigError, MetricError, TrainingError
from departnet.features import (
    FeatureMatrix,
    FeatureSchema,
    ScalerParams,
    WeatherIndex,
    apply_scaler,
    encode,
    fit_scaler,
)
from departnet.metrics import RouteError, mae, mape, per_route_rmse, rmse
from departnet.nn import (
    AdamState,
    Network,
    NetworkSpec,
    adam_step,
    backward,
    forward,
    init,
    mac_count,
    mse,
    param_count,
    reported_flops,
)
from departnet.preprocess import TripSegment
from departnet.records import StopLocation
from departnet.seeding import derive_seed

logger = logging.getLogger(__name__)

T = TypeVar("T")

DEFAULT_SPLIT = (0.7, 0.2, 0.1)
SPLIT_MODES = ("segment", "trip")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 10
    learning_rate: float = 0.01
    batch_size: int = 1000
    seed: int = 0
    split: tuple[float, float, float] = DEFAULT_SPLIT
    split_mode: str = "segment"

    def __post_init__(self) -> None:
        if self.epochs < 1:
            msg = f"epochs must be >= 1, got {self.epochs}"
            raise TrainingError(msg)
        if self.batch_size < 1:
            msg = f"batch_size must be >= 1, got {self.batch_size}"
            raise TrainingError(msg)
        if self.learning_rate <= 0:
            msg = f"learning_rate must be > 0, got {self.learning_rate}"
            raise TrainingError(msg)
        if self.split_mode not in SPLIT_MODES:
            msg = f"split_mode must be one of {SPLIT_MODES}, got {self.split_mode!r}"
            raise TrainingError(msg)
        _check_fractions(self.split)


def _check_fractions(fractions: Sequence[float]) -> None:
    if len(fractions) != 3 or any(f < 0 for f in fractions):
        msg = f"Expected three non-negative split fractions, got {tuple(fractions)}"
        raise ConfigError(msg)
    if not math.isclose(math.fsum(fractions), 1.0, abs_tol=1e-9):
        msg = f"Split fractions must sum to 1, got {tuple(fractions)}"
        raise ConfigError(msg)


def _floor_share(fraction: float, n: int) -> int:
    # Round first so 0.7 * 70 = 48.999... still floors to 49
    return math.floor(round(fraction * n, 9))


def split_indices(
    n: int,
    fractions: Sequence[float] = DEFAULT_SPLIT,
    seed: int = 0,
    groups: Sequence[str] | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Random disjoint train/val/test index sets of sizes floor(f·n).

    With ``groups`` (per-trip mode) whole groups move together and the
    sizes are approximate.
    """
    _check_fractions(fractions)
    if n < 10:
        msg = f"Need at least 10 examples to split, got {n}"
        raise TrainingError(msg)

    n_train = _floor_share(fractions[0], n)
    n_val = _floor_share(fractions[1], n)
    rng = np.random.default_rng(seed)

    if groups is None:
        order = rng.permutation(n)
        cut = n_train + n_val
        return order[:n_train], order[n_train:cut], order[cut:]

    members: dict[str, list[int]] = {}
    for i, group in enumerate(groups):
        members.setdefault(group, []).append(i)
    names = list(members)
    parts: tuple[list[int], list[int], list[int]] = ([], [], [])
    assigned = 0
    for g in rng.permutation(len(names)):
        rows = members[names[g]]
        part = 0 if assigned < n_train else 1 if assigned < n_train + n_val else 2
        parts[part].extend(rows)
        assigned += len(rows)
    train_idx, val_idx, test_idx = (np.asarray(p, dtype=np.intp) for p in parts)
    return train_idx, val_idx, test_idx


def split(
    examples: Sequence[T], fractions: Sequence[float] = DEFAULT_SPLIT, seed: int = 0
) -> tuple[list[T], list[T], list[T]]:
    train, val, test = split_indices(len(examples), fractions, seed)
    return (
        [examples[i] for i in train],
        [examples[i] for i in val],
        [examples[i] for i in test],
    )


@dataclass(frozen=True, eq=False)
class PreparedData:
    """Scaled train/val/test matrices; the scaler saw the training rows only."""

    train: FeatureMatrix
    val: FeatureMatrix
    test: FeatureMatrix
    scaler: ScalerParams


def prepare_data(matrix: FeatureMatrix, config: TrainConfig) -> PreparedData:
    if np.isnan(matrix.y).any():
        msg = "Training data contains segments without a next-stop deviation"
        raise TrainingError(msg)

    groups = matrix.half_trip_ids if config.split_mode == "trip" else None
    train_idx, val_idx, test_idx = split_indices(
        len(matrix), config.split, derive_seed(config.seed, "split"), groups
    )
    train = matrix.take(train_idx)
    scaler = fit_scaler(train.X)
    parts = [train, matrix.take(val_idx), matrix.take(test_idx)]
    train, val, test = (p.with_inputs(apply_scaler(p.X, scaler)) for p in parts)
    logger.debug(
        "Split %d examples into %d/%d/%d",
        len(matrix),
        len(train),
        len(val),
        len(test),
    )
    return PreparedData(train, val, test, scaler)


@dataclass(frozen=True)
class EpochLoss:
    epoch: int
    train_mse: float
    val_mse: float | None


def train(
    spec: NetworkSpec,
    train_set: FeatureMatrix,
    val_set: FeatureMatrix | None,
    config: TrainConfig,
) -> tuple[Network, list[EpochLoss]]:
    """
    Mini-batch Adam on MSE over already-scaled inputs.

    The data order is reshuffled every epoch from a seeded generator and
    the model after the last epoch is returned.
    """
    if len(train_set) == 0:
        msg = "Training set is empty"
        raise TrainingError(msg)
    if train_set.X.shape[1] != spec.input_dim:
        msg = f"Spec expects {spec.input_dim} inputs, data has {train_set.X.shape[1]}"
        raise TrainingError(msg)

    net = init(spec, derive_seed(config.seed, "init"))
    state = AdamState.create(net, lr=config.learning_rate)
    rng = np.random.default_rng(derive_seed(config.seed, "shuffle"))
    n = len(train_set)

    history = []
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            batch = order[start : start + config.batch_size]
            _, cache = forward(net, train_set.X[batch])
            grads = backward(net, cache, train_set.y[batch])
            net, state = adam_step(net, grads, state)

        train_loss = mse(net.predict(train_set.X), train_set.y)
        val_loss = (
            mse(net.predict(val_set.X), val_set.y)
            if val_set is not None and len(val_set)
            else None
        )
        history.append(EpochLoss(epoch, train_loss, val_loss))
        logger.debug(
            "%s epoch %d: train_mse=%.4f val_mse=%s",
            spec.label,
            epoch,
            train_loss,
            "n/a" if val_loss is None else f"{val_loss:.4f}",
        )
    return net, history


@dataclass(frozen=True)
class EvalReport:
    rmse: float
    mae: float
    mape: float | None
    mape_excluded: int
    per_route: dict[str, RouteError]
    n_test: int
    baseline_rmse: float

    def to_dict(self) -> dict[str, Any]:
        return {
            "rmse": self.rmse,
            "mae": self.mae,
            "mape": self.mape,
            "mape_excluded": self.mape_excluded,
            "n_test": self.n_test,
            "baseline_rmse": self.baseline_rmse,
            "per_route": {
                route: {"n": err.n, "rmse": err.rmse}
                for route, err in self.per_route.items()
            },
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "EvalReport":
        return cls(
            rmse=float(data["rmse"]),
            mae=float(data["mae"]),
            mape=None if data["mape"] is None else float(data["mape"]),
            mape_excluded=int(data["mape_excluded"]),
            per_route={
                route: RouteError(int(v["n"]), float(v["rmse"]))
                for route, v in data["per_route"].items()
            },
            n_test=int(data["n_test"]),
            baseline_rmse=float(data["baseline_rmse"]),
        )


def evaluate(net: Network, test_set: FeatureMatrix) -> EvalReport:
    """Score a network on scaled test rows, plus the predict-zero baseline."""
    predictions = net.predict(test_set.X)
    actuals = test_set.y
    try:
        mape_value, excluded = mape(predictions, actuals)
    except MetricError:
        mape_value, excluded = None, len(test_set)
        logger.warning("MAPE undefined: every test deviation is zero")

    return EvalReport(
        rmse=rmse(predictions, actuals),
        mae=mae(predictions, actuals),
        mape=mape_value,
        mape_excluded=excluded,
        per_route=per_route_rmse(predictions, actuals, test_set.route_ids),
        n_test=len(test_set),
        baseline_rmse=rmse(np.zeros_like(actuals), actuals),
    )


@dataclass(frozen=True)
class DeparturePrediction:
    route_id: str
    next_stop_id: str
    scheduled_time: datetime
    deviation: float
    predicted_time: datetime


def predict_departure(
    net: Network,
    scaler: ScalerParams,
    schema: FeatureSchema,
    segment: TripSegment,
    weather: WeatherIndex,
    stops: Mapping[str, StopLocation],
) -> DeparturePrediction:
    """
    Predicted next-stop departure: scheduled time plus predicted deviation.

    The deviation keeps full precision; the timestamp is rounded to whole
    seconds.
    """
    vector = encode(segment, weather, stops, schema)
    deviation, _ = forward(net, apply_scaler(vector.values, scaler))
    scheduled = segment.next.scheduled_time
    return DeparturePrediction(
        route_id=segment.route_id,
        next_stop_id=segment.next.stop_id,
        scheduled_time=scheduled,
        deviation=deviation,
        predicted_time=scheduled + timedelta(seconds=round(deviation)),
    )


def measure_latency(net: Network, X: np.ndarray, max_samples: int = 1000) -> float:
    """Mean wall-clock microseconds per single-sample forward pass."""
    rows = np.atleast_2d(X)[:max_samples]
    if rows.shape[0] == 0:
        return 0.0
    start = time.perf_counter()
    for row in rows:
        forward(net, row)
    return (time.perf_counter() - start) / rows.shape[0] * 1e6


@dataclass(frozen=True)
class AblationRow:
    spec: NetworkSpec
    test_rmse: float
    val_rmse: float | None
    params: int
    macs: int
    flops: int
    history: list[EpochLoss] = field(default_factory=list, compare=False, repr=False)


def ablate(
    specs: Sequence[NetworkSpec], data: PreparedData, config: TrainConfig
) -> list[AblationRow]:
    """Train and score every spec on the same split with the same seeds."""
    rows = []
    for spec in specs:
        net, history = train(spec, data.train, data.val, config)
        val_rmse = rmse(net.predict(data.val.X), data.val.y) if len(data.val) else None
        rows.append(
            AblationRow(
                spec=spec,
                test_rmse=rmse(net.predict(data.test.X), data.test.y),
                val_rmse=val_rmse,
                params=param_count(spec),
                macs=mac_count(spec),
                flops=reported_flops(spec),
                history=history,
            )
        )
        logger.debug("Ablation %s: test_rmse=%.4f", spec.label, rows[-1].test_rmse)
    return rows


def select_optimal(
    rows: Sequence[AblationRow], tolerance: float = 0.015
) -> AblationRow:
    """
    Smallest model whose validation RMSE is within ``tolerance`` of the best.

    Rows without a validation score fall back to their test RMSE.
    """
    if not rows:
        msg = "No ablation rows to select from"
        raise TrainingError(msg)

    def score(row: AblationRow) -> float:
        return row.test_rmse if row.val_rmse is None else row.val_rmse

    best = min(score(r) for r in rows)
    eligible = [r for r in rows if score(r) <= best * (1 + tolerance)]
    return min(eligible, key=lambda r: (r.params, score(r)))
