"""
Self-contained model artifact: network, input scaler and feature schema.

The file is JSON text. Floats are written with Python's shortest
round-trip repr, so a loaded model predicts bit-identically.
"""

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np

from departnet.exceptions import (
    ArtifactShapeError,
    ArtifactTruncatedError,
    ArtifactVersionError,
    ShapeError,
)
from departnet.features import FeatureSchema, ScalerParams, apply_scaler
from departnet.nn import Network, NetworkSpec

logger = logging.getLogger(__name__)

ARTIFACT_FORMAT = "departnet-model"
ARTIFACT_VERSION = 1


@dataclass(frozen=True, eq=False)
class ModelArtifact:
    network: Network
    scaler: ScalerParams
    schema: FeatureSchema

    def predict(self, X: np.ndarray) -> np.ndarray:
        """Deviation predictions (seconds) for unscaled feature rows."""
        return self.network.predict(apply_scaler(np.atleast_2d(X), self.scaler))


def save(
    net: Network, scaler: ScalerParams, schema: FeatureSchema, path: str | Path
) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    document = {
        "format": ARTIFACT_FORMAT,
        "version": ARTIFACT_VERSION,
        "spec": net.spec.to_dict(),
        "schema": schema.to_dict(),
        "scaler": {
            "min": scaler.minimum.tolist(),
            "max": scaler.maximum.tolist(),
        },
        "n_parameters": net.n_parameters,
        "weights": [w.tolist() for w in net.weights],
        "biases": [b.tolist() for b in net.biases],
    }
    path.write_text(json.dumps(document) + "\n", encoding="utf-8")
    logger.debug(
        "Saved %s model (%d parameters) to %s", net.spec.label, net.n_parameters, path
    )
    return path


def _read_document(path: Path) -> dict[str, Any]:
    try:
        document = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        msg = f"Model artifact {path} is truncated or not valid JSON: {e}"
        raise ArtifactTruncatedError(msg) from e
    if not isinstance(document, dict):
        msg = f"Model artifact {path} has no top-level object"
        raise ArtifactTruncatedError(msg)
    return document


def load(path: str | Path) -> ModelArtifact:
    """
    Load an artifact written by ``save``.

    Raises:
        ArtifactVersionError: Unknown format tag or version
        ArtifactTruncatedError: Unreadable JSON or missing sections
        ArtifactShapeError: Stored arrays disagree with the declared spec
    """
    path = Path(path)
    document = _read_document(path)

    if (
        document.get("format") != ARTIFACT_FORMAT
        or document.get("version") != ARTIFACT_VERSION
    ):
        msg = (
            f"Unsupported artifact {document.get('format')!r} "
            f"version {document.get('version')!r}; expected "
            f"{ARTIFACT_FORMAT!r} version {ARTIFACT_VERSION}"
        )
        raise ArtifactVersionError(msg)

    try:
        spec = NetworkSpec.from_dict(document["spec"])
        schema = FeatureSchema.from_dict(document["schema"])
        minimum = np.asarray(document["scaler"]["min"], dtype=np.float64)
        maximum = np.asarray(document["scaler"]["max"], dtype=np.float64)
        weights = document["weights"]
        biases = document["biases"]
        declared = int(document["n_parameters"])
    except KeyError as e:
        msg = f"Model artifact {path} is missing section {e}"
        raise ArtifactTruncatedError(msg) from e

    try:
        network = Network(
            spec,
            tuple(np.asarray(w, dtype=np.float64) for w in weights),
            tuple(np.asarray(b, dtype=np.float64) for b in biases),
        )
        scaler = ScalerParams(minimum, maximum)
    except (ShapeError, ValueError) as e:
        msg = f"Model artifact {path} has inconsistent shapes: {e}"
        raise ArtifactShapeError(msg) from e

    if network.n_parameters != declared:
        msg = f"Declared {declared} parameters but found {network.n_parameters}"
        raise ArtifactShapeError(msg)
    if scaler.dims != spec.input_dim or schema.total_dims != spec.input_dim:
        msg = (
            f"Input width mismatch: spec {spec.input_dim}, scaler {scaler.dims}, "
            f"schema {schema.total_dims}"
        )
        raise ArtifactShapeError(msg)

    return ModelArtifact(network, scaler, schema)
