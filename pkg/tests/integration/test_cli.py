from pathlib import Path

import pandas as pd
import pytest
from click.testing import CliRunner, Result

from departnet import artifact
from departnet.nn import NetworkSpec, param_count
from departnet_cli.main import cli


@pytest.fixture
def runner() -> CliRunner:
    return CliRunner()


def _invoke(runner: CliRunner, workdir: Path, *args: str) -> Result:
    return runner.invoke(cli, ["--workdir", str(workdir), "--threads", "1", *args])


def _prepared(runner: CliRunner, workdir: Path) -> None:
    """Synthetic inputs plus a preprocessed segments file."""
    assert _invoke(runner, workdir, "synth", "--n-trips", "200").exit_code == 0
    assert _invoke(runner, workdir, "preprocess").exit_code == 0


def _trained(runner: CliRunner, workdir: Path) -> None:
    _prepared(runner, workdir)
    result = _invoke(
        runner, workdir, "train", "--spec", "8", "--epochs", "2", "--batch-size", "100"
    )
    assert result.exit_code == 0, result.output


def _query(workdir: Path, rows: int, route_id: str | None = None) -> Path:
    frame = pd.read_csv(
        workdir / "segments.csv", dtype=str, keep_default_na=False
    ).head(rows)
    frame["next_actual_time"] = ""
    frame["next_deviation_s"] = ""
    if route_id is not None:
        frame["route_id"] = route_id
    path = workdir / "query.csv"
    frame.to_csv(path, index=False)
    return path


@pytest.mark.integration
class TestSynthCommand:
    def test_writes_dataset(self, runner: CliRunner, tmp_path) -> None:
        result = _invoke(runner, tmp_path, "synth", "--n-trips", "50")

        assert result.exit_code == 0, result.output
        for name in ("departures.csv", "weather.csv", "stops.csv", "ground_truth.csv"):
            assert (tmp_path / name).exists()

    def test_invalid_stop_range(self, runner: CliRunner, tmp_path) -> None:
        result = _invoke(runner, tmp_path, "synth", "--stops-min", "1")

        assert result.exit_code == 2
        assert "stops per trip" in result.output
        assert not (tmp_path / "departures.csv").exists()

    def test_seed_option_reaches_generator(self, runner: CliRunner, tmp_path) -> None:
        for name, seed in (("a", "3"), ("b", "3"), ("c", "4")):
            args = ["--workdir", str(tmp_path / name), "--seed", seed]
            runner.invoke(cli, [*args, "synth", "--n-trips", "20"])

        def departures(name: str) -> bytes:
            return (tmp_path / name / "departures.csv").read_bytes()

        assert departures("a") == departures("b")
        assert departures("a") != departures("c")


@pytest.mark.integration
class TestPreprocessCommand:
    def test_prints_thresholds(self, runner: CliRunner, tmp_path) -> None:
        _invoke(runner, tmp_path, "synth", "--n-trips", "100")

        result = _invoke(runner, tmp_path, "preprocess", "-k", "2")

        assert result.exit_code == 0, result.output
        assert "low threshold" in result.output
        assert "high threshold" in result.output
        assert (tmp_path / "segments.csv").exists()
        assert (tmp_path / "preprocess_stats.json").exists()

    def test_missing_stops_file(self, runner: CliRunner, tmp_path) -> None:
        _invoke(runner, tmp_path, "synth", "--n-trips", "20")
        stops = tmp_path / "stops.csv"
        stops.unlink()

        result = _invoke(runner, tmp_path, "preprocess")

        assert result.exit_code == 2
        assert f"input file not found: {stops}" in result.output
        assert not (tmp_path / "segments.csv").exists()

    def test_unknown_config_key(self, runner: CliRunner, tmp_path) -> None:
        config = tmp_path / "run.cfg"
        config.write_text("epochs = 3\nwidth = 9\n")

        result = runner.invoke(cli, ["--config", str(config), "preprocess"])

        assert result.exit_code == 2
        assert "Unknown configuration keys: width" in result.output


@pytest.mark.integration
class TestTrainCommand:
    def test_requires_preprocess(self, runner: CliRunner, tmp_path) -> None:
        result = _invoke(runner, tmp_path, "train")

        assert result.exit_code == 2
        assert "departnet preprocess" in result.output

    def test_invalid_epochs(self, runner: CliRunner, tmp_path) -> None:
        result = _invoke(runner, tmp_path, "train", "--epochs", "0")

        assert result.exit_code == 2

    def test_spec_sets_architecture(self, runner: CliRunner, tmp_path) -> None:
        _prepared(runner, tmp_path)

        result = _invoke(
            runner, tmp_path, "train", "--spec", "512,128,64", "--epochs", "1"
        )

        assert result.exit_code == 0, result.output
        loaded = artifact.load(tmp_path / "model.json")
        spec = NetworkSpec(loaded.schema.total_dims, (512, 128, 64))
        assert loaded.network.spec == spec
        assert loaded.network.n_parameters == param_count(spec)
        assert "Test Evaluation" in result.output


@pytest.mark.integration
class TestAblateCommand:
    def test_custom_spec_gives_one_row(self, runner: CliRunner, tmp_path) -> None:
        _prepared(runner, tmp_path)

        result = _invoke(runner, tmp_path, "ablate", "--spec", "8", "--epochs", "1")

        assert result.exit_code == 0, result.output
        lines = (tmp_path / "ablation.csv").read_text().splitlines()
        assert len(lines) == 2
        assert lines[1].split(",")[0].endswith("-8-1")


@pytest.mark.integration
class TestPredictCommand:
    def test_predictions_written(self, runner: CliRunner, tmp_path) -> None:
        _trained(runner, tmp_path)
        query = _query(tmp_path, rows=4)

        result = _invoke(runner, tmp_path, "predict", str(query))

        assert result.exit_code == 0, result.output
        assert "µs" in result.output
        frame = pd.read_csv(tmp_path / "predictions.csv")
        assert len(frame) == 4
        assert frame["predicted_time"].notna().all()

    def test_every_row_failing_exits_one(self, runner: CliRunner, tmp_path) -> None:
        _trained(runner, tmp_path)
        query = _query(tmp_path, rows=3, route_id="no-such-route")

        result = _invoke(runner, tmp_path, "predict", str(query))

        assert result.exit_code == 1
        assert "every query row failed" in result.output

    def test_requires_model(self, runner: CliRunner, tmp_path) -> None:
        _prepared(runner, tmp_path)
        query = _query(tmp_path, rows=1)

        result = _invoke(runner, tmp_path, "predict", str(query))

        assert result.exit_code == 2
        assert "departnet train" in result.output


@pytest.mark.integration
class TestReportCommand:
    def test_bundle(self, runner: CliRunner, tmp_path) -> None:
        _trained(runner, tmp_path)

        result = _invoke(runner, tmp_path, "report")

        assert result.exit_code == 0, result.output
        assert (tmp_path / "report" / "summary.txt").exists()

    def test_requires_train(self, runner: CliRunner, tmp_path) -> None:
        result = _invoke(runner, tmp_path, "report")

        assert result.exit_code == 2
        assert "departnet train" in result.output
