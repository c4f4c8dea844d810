"""
Departnet - next-stop bus departure deviation prediction.
"""

from departnet._api import (
    PredictResult,
    PreprocessResult,
    TrainResult,
    build_features,
    run_ablate,
    run_predict,
    run_preprocess,
    run_report,
    run_synth,
    run_train,
)
from departnet.config import RunConfig, load_run_config
from departnet.exceptions import (
    ConfigError,
    DepartnetError,
    FeatureError,
    IngestError,
    PipelineError,
    SynthError,
)
from departnet.nn import Network, NetworkSpec
from departnet.synth import SynthConfig

__version__ = "1.0.0"
__all__ = [
    "ConfigError",
    "DepartnetError",
    "FeatureError",
    "IngestError",
    "Network",
    "NetworkSpec",
    "PipelineError",
    "PredictResult",
    "PreprocessResult",
    "RunConfig",
    "SynthConfig",
    "SynthError",
    "TrainResult",
    "build_features",
    "load_run_config",
    "run_ablate",
    "run_predict",
    "run_preprocess",
    "run_report",
    "run_synth",
    "run_train",
]
