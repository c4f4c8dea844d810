from typing import Any


class DepartnetError(Exception):
    """Base exception for all departnet errors."""


class IngestError(DepartnetError):
    """A source file could not be read as a whole."""


class HeaderError(IngestError):
    """A required column is missing from the header row."""

    def __init__(self, column: str) -> None:
        super().__init__(f"Missing required column: {column}")
        self.column = column


class StopConflictError(IngestError):
    """The same stop_id appears twice with different coordinates."""

    def __init__(self, stop_id: str, first: Any, second: Any) -> None:
        super().__init__(
            f"Conflicting rows for stop_id {stop_id!r}: {first} vs {second}"
        )
        self.stop_id = stop_id
        self.rows = (first, second)


class PreprocessError(DepartnetError):
    """Statistics requested over an empty population."""


class FeatureError(DepartnetError):
    """A segment could not be encoded."""


class UnknownStopError(FeatureError):
    def __init__(self, stop_id: str) -> None:
        super().__init__(f"Unknown stop_id: {stop_id}")
        self.stop_id = stop_id


class UnknownRouteError(FeatureError):
    def __init__(self, route_id: str) -> None:
        super().__init__(f"Route not in vocabulary: {route_id}")
        self.route_id = route_id


class MissingWeatherError(FeatureError):
    def __init__(self, timestamp: Any) -> None:
        super().__init__(f"No weather observation within 1 hour of {timestamp}")
        self.timestamp = timestamp


class SchemaVersionError(FeatureError):
    """Unknown feature layout, or artifact and query disagree on it."""


class ShapeError(DepartnetError):
    """Array dimensions do not chain or do not match the network."""


class ArtifactError(DepartnetError):
    """A model artifact could not be loaded."""


class ArtifactVersionError(ArtifactError):
    pass


class ArtifactTruncatedError(ArtifactError):
    pass


class ArtifactShapeError(ArtifactError):
    pass


class MetricError(DepartnetError):
    """Metric undefined for the given inputs."""


class TrainingError(DepartnetError):
    """Invalid training setup."""


class ConfigError(DepartnetError):
    """Invalid run configuration (usage error)."""


class SynthError(DepartnetError):
    """Invalid synthetic dataset configuration (usage error)."""


class PipelineError(DepartnetError):
    """A pipeline stage failed for a reason outside the library's own checks."""
