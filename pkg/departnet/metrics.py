import logging
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from departnet.exceptions import MetricError

logger = logging.getLogger(__name__)

ArrayLike = Sequence[float] | np.ndarray


def _pair(predictions: ArrayLike, actuals: ArrayLike) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(predictions, dtype=np.float64).ravel()
    a = np.asarray(actuals, dtype=np.float64).ravel()
    if p.shape != a.shape:
        msg = f"Length mismatch: {p.size} predictions vs {a.size} actuals"
        raise MetricError(msg)
    if p.size == 0:
        msg = "Metrics need at least one prediction"
        raise MetricError(msg)
    return p, a


def rmse(predictions: ArrayLike, actuals: ArrayLike) -> float:
    """Root mean squared error in the units of the inputs (seconds)."""
    p, a = _pair(predictions, actuals)
    return float(np.sqrt(np.mean((a - p) ** 2)))


def mae(predictions: ArrayLike, actuals: ArrayLike) -> float:
    p, a = _pair(predictions, actuals)
    return float(np.mean(np.abs(a - p)))


def mape(predictions: ArrayLike, actuals: ArrayLike) -> tuple[float, int]:
    """
    Mean absolute percentage error over pairs with a non-zero actual.

    Returns:
        (percent, excluded) where ``excluded`` counts zero actuals
    """
    p, a = _pair(predictions, actuals)
    nonzero = a != 0
    excluded = int(a.size - nonzero.sum())
    if not nonzero.any():
        msg = "MAPE is undefined when every actual value is zero"
        raise MetricError(msg)
    if excluded:
        logger.debug("MAPE excluded %d zero actuals", excluded)
    percent = float(np.mean(np.abs(p[nonzero] - a[nonzero]) / np.abs(a[nonzero])) * 100)
    return percent, excluded


@dataclass(frozen=True)
class RouteError:
    n: int
    rmse: float


def per_route_rmse(
    predictions: ArrayLike, actuals: ArrayLike, route_ids: Sequence[str]
) -> dict[str, RouteError]:
    """RMSE restricted to each route, keyed and ordered by route_id."""
    p, a = _pair(predictions, actuals)
    if len(route_ids) != p.size:
        msg = f"{len(route_ids)} route ids for {p.size} predictions"
        raise MetricError(msg)

    routes = np.asarray(route_ids, dtype=object)
    result = {}
    for route in sorted(set(route_ids)):
        mask = routes == route
        result[route] = RouteError(int(mask.sum()), rmse(p[mask], a[mask]))
    return result
