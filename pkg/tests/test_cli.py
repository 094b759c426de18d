"""
Test Suite for the command-line interface
"""

import json
import struct

import click
import numpy as np
import pytest
from click.testing import CliRunner

from app import create_cli
from src.engine import set_anomaly_detection
from src.middleware.guards import EXIT_USAGE


def write_idx(path, images, labels):
    count, rows, cols = images.shape
    with open(f"{path}-images-idx3-ubyte", "wb") as f:
        f.write(struct.pack(">IIII", 0x803, count, rows, cols) + images.astype(np.uint8).tobytes())
    with open(f"{path}-labels-idx1-ubyte", "wb") as f:
        f.write(struct.pack(">II", 0x801, count) + labels.astype(np.uint8).tobytes())


@pytest.fixture(autouse=True)
def isolated(tmp_path, monkeypatch):
    """Keep logs and default run directories inside tmp_path and reset global anomaly mode"""
    monkeypatch.chdir(tmp_path)
    yield
    set_anomaly_detection(False)


@pytest.fixture
def cli():
    """CLI group built with the testing configuration"""
    return create_cli("testing")


@pytest.fixture
def runner():
    """Click test runner"""
    return CliRunner()


@pytest.fixture
def mnist_dir(tmp_path):
    """Tiny MNIST-format directory: 16 train and 8 test images"""
    data_dir = tmp_path / "mnist"
    data_dir.mkdir()
    rng = np.random.default_rng(0)
    write_idx(str(data_dir / "train"), rng.integers(0, 256, size=(16, 28, 28)), np.arange(16) % 10)
    write_idx(str(data_dir / "t10k"), rng.integers(0, 256, size=(8, 28, 28)), np.arange(8) % 10)
    return data_dir


@pytest.fixture
def trained_run(cli, runner, mnist_dir, tmp_path):
    """One-epoch balanced run on the tiny MNIST directory; returns the run directory and CLI result"""
    out_dir = tmp_path / "balanced_run"
    result = runner.invoke(
        cli,
        [
            "train",
            "--dataset",
            "mnist",
            "--data-dir",
            str(mnist_dir),
            "--epochs",
            "1",
            "--warmup-epochs",
            "1",
            "--batch-size",
            "8",
            "--out",
            str(out_dir),
        ],
    )
    assert result.exit_code == 0, result.output
    return out_dir, result


class TestCliFactory:
    """Test CLI construction"""

    def test_commands_registered(self, cli):
        """Test that every command is available"""
        assert set(cli.commands) == {"train", "eval", "gradcheck", "frontier"}

    def test_unknown_configuration(self):
        """Test that an unknown configuration name is rejected"""
        with pytest.raises(click.BadParameter):
            create_cli("staging")

    def test_help(self, cli, runner):
        """Test the top-level help text"""
        result = runner.invoke(cli, ["--help"])
        assert result.exit_code == 0
        assert "gradcheck" in result.output


class TestTrainCommand:
    """Test the train command"""

    def test_train_writes_artifacts(self, trained_run):
        """Test that a short run prints a summary and writes its run directory"""
        out_dir, result = trained_run
        assert "Artifacts written to" in result.output
        assert "balanced: final acc" in result.output
        for name in ("metrics.csv", "run.json", "best.cgv", "final.cgv"):
            assert (out_dir / name).exists(), name

    def test_unknown_preset(self, cli, runner, mnist_dir):
        """Test that an unknown preset exits with the usage code"""
        result = runner.invoke(cli, ["train", "--preset", "extreme", "--data-dir", str(mnist_dir)])
        assert result.exit_code == EXIT_USAGE

    def test_missing_dataset_files(self, cli, runner, mnist_dir):
        """Test that a directory without the dataset's files exits with the usage code"""
        result = runner.invoke(cli, ["train", "--dataset", "cifar10", "--data-dir", str(mnist_dir), "--epochs", "1"])
        assert result.exit_code == EXIT_USAGE

    def test_invalid_override(self, cli, runner, mnist_dir):
        """Test that an out-of-range override exits with the usage code"""
        result = runner.invoke(
            cli, ["train", "--dataset", "mnist", "--data-dir", str(mnist_dir), "--tau-target", "1.5"]
        )
        assert result.exit_code == EXIT_USAGE


class TestEvalCommand:
    """Test the eval command"""

    def test_eval_json(self, cli, runner, mnist_dir, trained_run):
        """Test JSON evaluation output for a saved checkpoint"""
        out_dir, _ = trained_run
        result = runner.invoke(
            cli,
            [
                "eval",
                "--checkpoint",
                str(out_dir / "final.cgv"),
                "--dataset",
                "mnist",
                "--data-dir",
                str(mnist_dir),
                "--json",
            ],
        )
        assert result.exit_code == 0, result.output
        report = json.loads(result.output.strip().splitlines()[-1])
        assert 0.0 <= report["accuracy"] <= 100.0
        assert len(report["per_block_skip"]) == 4

    def test_eval_table_and_trace(self, cli, runner, mnist_dir, trained_run, tmp_path):
        """Test the per-block table and the gate trace file"""
        out_dir, _ = trained_run
        trace_path = tmp_path / "trace.csv"
        result = runner.invoke(
            cli,
            [
                "eval",
                "--checkpoint",
                str(out_dir / "best.cgv"),
                "--dataset",
                "mnist",
                "--data-dir",
                str(mnist_dir),
                "--trace",
                str(trace_path),
            ],
        )
        assert result.exit_code == 0, result.output
        assert "skip %" in result.output
        assert len(trace_path.read_text().splitlines()) == 1 + 8 * 4

    def test_topology_mismatch(self, cli, runner, mnist_dir, trained_run):
        """Test that loading an MNIST checkpoint into the CIFAR topology fails"""
        out_dir, _ = trained_run
        result = runner.invoke(
            cli,
            ["eval", "--checkpoint", str(out_dir / "final.cgv"), "--dataset", "cifar10", "--data-dir", str(mnist_dir)],
        )
        assert result.exit_code != 0


class TestDiagnosticCommands:
    """Test gradcheck and frontier"""

    def test_gradcheck_single_case(self, cli, runner):
        """Test that one gradient check case passes"""
        result = runner.invoke(cli, ["gradcheck", "--case", "matmul"])
        assert result.exit_code == 0, result.output
        assert "All 1 cases passed" in result.output

    def test_gradcheck_unknown_case(self, cli, runner):
        """Test that click rejects an unknown case name"""
        result = runner.invoke(cli, ["gradcheck", "--case", "softmax_attention"])
        assert result.exit_code == 2

    def test_frontier(self, cli, runner, trained_run):
        """Test the frontier table over a finished run"""
        out_dir, _ = trained_run
        result = runner.invoke(cli, ["frontier", str(out_dir)])
        assert result.exit_code == 0, result.output
        assert "balanced" in result.output
        assert "pareto" in result.output

    def test_frontier_without_metrics(self, cli, runner, tmp_path):
        """Test that a directory without metrics exits with the usage code"""
        empty = tmp_path / "empty_run"
        empty.mkdir()
        result = runner.invoke(cli, ["frontier", str(empty)])
        assert result.exit_code == EXIT_USAGE
