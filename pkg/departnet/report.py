"""
Report bundle: delimited tables plus a plain-text summary.

Nothing time-dependent is written, so identical inputs give identical
bytes.
"""

import json
import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from departnet.exceptions import PipelineError
from departnet.nn import NetworkSpec
from departnet.training import AblationRow, EpochLoss, EvalReport, select_optimal

logger = logging.getLogger(__name__)

HISTOGRAM_BIN_S = 60.0

PER_ROUTE_FILE = "per_route_rmse.csv"
HISTORY_FILE = "history.csv"
ABLATION_FILE = "ablation.csv"
HISTOGRAM_FILE = "deviation_histogram.csv"
EVALUATION_FILE = "evaluation.json"
SUMMARY_FILE = "summary.txt"

ABLATION_COLUMNS = [
    "spec",
    "params",
    "macs",
    "flops_paper_convention",
    "test_rmse_s",
    "val_rmse_s",
]


@dataclass(frozen=True)
class ReportBundle:
    directory: Path
    files: tuple[Path, ...]


def deviation_histogram(
    deviations: Sequence[float], bin_width: float = HISTOGRAM_BIN_S
) -> list[tuple[float, float, int]]:
    """Counts over fixed-width bins aligned to multiples of ``bin_width``."""
    values = np.asarray(deviations, dtype=np.float64)
    if values.size == 0:
        return []
    low = math.floor(values.min() / bin_width) * bin_width
    high = (math.floor(values.max() / bin_width) + 1) * bin_width
    edges = np.linspace(low, high, round((high - low) / bin_width) + 1)
    counts, _ = np.histogram(values, bins=edges)
    return [
        (float(edges[i]), float(edges[i + 1]), int(count))
        for i, count in enumerate(counts)
    ]


def write_history(history: Sequence[EpochLoss], path: Path) -> Path:
    pd.DataFrame(
        [(h.epoch, h.train_mse, h.val_mse) for h in history],
        columns=["epoch", "train_mse", "val_mse"],
    ).to_csv(path, index=False)
    return path


def read_history(path: str | Path) -> list[EpochLoss]:
    frame = pd.read_csv(path)
    return [
        EpochLoss(
            epoch=int(row.epoch),
            train_mse=float(row.train_mse),
            val_mse=None if pd.isna(row.val_mse) else float(row.val_mse),
        )
        for row in frame.itertuples(index=False)
    ]


def write_ablation(rows: Sequence[AblationRow], path: Path) -> Path:
    pd.DataFrame(
        [
            (r.spec.label, r.params, r.macs, r.flops, r.test_rmse, r.val_rmse)
            for r in rows
        ],
        columns=ABLATION_COLUMNS,
    ).to_csv(path, index=False)
    return path


def read_ablation(path: str | Path) -> list[AblationRow]:
    """Rows written by ``write_ablation``; training histories are not kept."""
    frame = pd.read_csv(path, dtype={"spec": str})
    rows = []
    for row in frame.itertuples(index=False):
        input_dim, *hidden, output_dim = (int(d) for d in row.spec.split("-"))
        rows.append(
            AblationRow(
                spec=NetworkSpec(input_dim, tuple(hidden), output_dim),
                test_rmse=float(row.test_rmse_s),
                val_rmse=None if pd.isna(row.val_rmse_s) else float(row.val_rmse_s),
                params=int(row.params),
                macs=int(row.macs),
                flops=int(row.flops_paper_convention),
            )
        )
    return rows


def write_evaluation(evaluation: EvalReport, path: Path) -> Path:
    path.write_text(json.dumps(evaluation.to_dict(), indent=2) + "\n", encoding="utf-8")
    return path


def read_evaluation(path: str | Path) -> EvalReport:
    return EvalReport.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _summary(
    evaluation: EvalReport,
    history: Sequence[EpochLoss],
    ablation: Sequence[AblationRow] | None,
) -> str:
    lines = [
        "Next-stop departure deviation model",
        "",
        f"test examples:            {evaluation.n_test}",
        f"RMSE (s):                 {evaluation.rmse:.4f}",
        f"MAE (s):                  {evaluation.mae:.4f}",
    ]
    if evaluation.mape is None:
        lines.append("MAPE (%):                 undefined (all actuals zero)")
    else:
        lines.append(
            f"MAPE (%):                 {evaluation.mape:.2f} "
            f"(excluded {evaluation.mape_excluded} zero deviations)"
        )
    lines.append(f"predict-zero RMSE (s):    {evaluation.baseline_rmse:.4f}")

    if evaluation.per_route:
        worst_route, worst = max(
            evaluation.per_route.items(), key=lambda item: (item[1].rmse, item[0])
        )
        lines += [
            f"routes evaluated:         {len(evaluation.per_route)}",
            f"worst route:              {worst_route} "
            f"({worst.rmse:.4f} s, n={worst.n})",
        ]

    if history:
        last = history[-1]
        val = "n/a" if last.val_mse is None else f"{last.val_mse:.4f}"
        lines += [
            f"epochs:                   {len(history)}",
            f"final train MSE:          {last.train_mse:.4f}",
            f"final validation MSE:     {val}",
        ]

    if ablation:
        chosen = select_optimal(ablation)
        lines += ["", "architecture        params      MACs  test RMSE (s)"]
        lines += [
            f"{r.spec.hidden_label:<18}{r.params:>8}{r.macs:>10}{r.test_rmse:>15.4f}"
            + ("  *" if r is chosen else "")
            for r in ablation
        ]
        lines.append("* smallest model within 1.5% of the best validation RMSE")
    return "\n".join(lines) + "\n"


def report(
    evaluation: EvalReport,
    history: Sequence[EpochLoss],
    path: str | Path,
    ablation: Sequence[AblationRow] | None = None,
    deviations: Sequence[float] | None = None,
) -> ReportBundle:
    """
    Write the report bundle into directory ``path``.

    Raises:
        PipelineError: The directory cannot be created or written
    """
    directory = Path(path)
    try:
        directory.mkdir(parents=True, exist_ok=True)
        files = [
            directory / PER_ROUTE_FILE,
            write_history(history, directory / HISTORY_FILE),
            write_evaluation(evaluation, directory / EVALUATION_FILE),
        ]
        pd.DataFrame(
            [(route, err.n, err.rmse) for route, err in evaluation.per_route.items()],
            columns=["route_id", "n", "rmse_s"],
        ).to_csv(files[0], index=False)

        if ablation:
            files.append(write_ablation(ablation, directory / ABLATION_FILE))
        if deviations is not None:
            histogram = pd.DataFrame(
                deviation_histogram(deviations),
                columns=["bin_low_s", "bin_high_s", "count"],
            )
            histogram.to_csv(directory / HISTOGRAM_FILE, index=False)
            files.append(directory / HISTOGRAM_FILE)

        summary = directory / SUMMARY_FILE
        summary.write_text(_summary(evaluation, history, ablation), encoding="utf-8")
        files.append(summary)
    except OSError as e:
        msg = f"Cannot write report bundle to {directory}: {e}"
        raise PipelineError(msg) from e

    logger.debug("Wrote %d report files to %s", len(files), directory)
    return ReportBundle(directory, tuple(files))
