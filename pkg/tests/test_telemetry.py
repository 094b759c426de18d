"""
Test Suite for run telemetry, error guards and time utilities
"""

import csv
import json
import logging
import os
from datetime import datetime, timedelta, timezone
from types import SimpleNamespace

import click
import numpy as np
import pytest
from click.testing import CliRunner

from src.engine import Parameter, Tensor
from src.gating import GateDecision
from src.middleware.guards import (
    EXIT_DIVERGED,
    EXIT_FAILURE,
    EXIT_USAGE,
    ErrorHandler,
    command_error_handler,
    finite_guard,
    finite_parameters_guard,
)
from src.middleware.monitoring import ResourceMonitor, epoch_metrics_middleware
from src.services.records import GATE_TRACE_COLUMNS, EpochMetrics, GateTraceRecord
from src.services.telemetry import (
    TelemetryService,
    dump_gate_trace,
    export_metrics_csv,
    metrics_table,
    read_metrics_csv,
)
from src.utils.errors import ConfigurationError, DataFormatError, ShapeError, TrainingDivergedError
from src.utils.logging import log_epoch_metrics, setup_logging
from src.utils.time_util import format_duration, format_for_storage, run_stamp


def _metrics(epoch, acc=50.0, g_bar=0.8):
    return EpochMetrics(
        epoch=epoch,
        train_acc=acc,
        test_acc=acc - 1.0,
        ce=1.0 / (epoch + 1),
        cons=0.123456789,
        flops=0.01,
        total=1.5,
        g_bar=g_bar,
        skip_pct=(1.0 - g_bar) * 100.0,
        lr=0.1,
        prog=min(1.0, epoch / 40),
    )


def _decision(batch=3, block=0, relaxed=True):
    cir = Tensor(np.linspace(0.0, 2.0, batch))
    gates = np.linspace(0.1, 0.9, batch)
    return GateDecision(
        cir=cir,
        controller_out=Tensor(np.zeros(batch)),
        logit=Tensor(np.zeros(batch)),
        relaxed=Tensor(gates) if relaxed else None,
        hard=(gates > 0.45).astype(np.float64),
        block_index=block,
    )


@pytest.fixture
def service(tmp_path):
    """Telemetry service over a fresh run directory"""
    return TelemetryService(str(tmp_path / "run"))


class TestMetricsCsv:
    """Test the per-epoch metrics file"""

    def test_empty_history(self, tmp_path):
        """Test that no epochs gives a header-only file"""
        path = tmp_path / "metrics.csv"
        export_metrics_csv([], str(path))
        lines = path.read_text().splitlines()
        assert lines == [",".join(EpochMetrics.columns())]

    def test_one_row_per_epoch(self, tmp_path):
        """Test that 160 epochs give 161 lines"""
        path = tmp_path / "metrics.csv"
        export_metrics_csv([_metrics(e) for e in range(160)], str(path))
        assert len(path.read_text().splitlines()) == 161

    def test_round_trip(self, tmp_path):
        """Test that parsing the CSV reproduces the values"""
        path = str(tmp_path / "nested" / "metrics.csv")
        original = [_metrics(e) for e in range(5)]
        export_metrics_csv(original, path)
        for before, after in zip(original, read_metrics_csv(path)):
            assert after.epoch == before.epoch
            for column in EpochMetrics.columns()[1:]:
                assert getattr(after, column) == pytest.approx(getattr(before, column), abs=1e-6)

    def test_column_order(self):
        """Test the fixed column order"""
        assert EpochMetrics.columns() == [
            "epoch",
            "train_acc",
            "test_acc",
            "ce",
            "cons",
            "flops",
            "total",
            "g_bar",
            "skip_pct",
            "lr",
            "prog",
        ]

    def test_malformed_row(self):
        """Test that a row with a missing column is rejected"""
        with pytest.raises(DataFormatError):
            EpochMetrics.from_row({"epoch": "1"})

    def test_table(self):
        """Test the console table"""
        table = metrics_table([_metrics(0), _metrics(1)])
        assert "test acc" in table
        assert len(table.splitlines()) == 4


class TestGateTrace:
    """Test per-sample gate trace export"""

    def test_rows_and_ranges(self, tmp_path):
        """Test one row per sample with CIR in [0, 2] and gates in [0, 1]"""
        path = tmp_path / "trace.csv"
        records = [GateTraceRecord.from_decision(_decision(block=b), 0, 0, "train") for b in range(2)]
        assert dump_gate_trace(records, str(path)) == 2
        with open(path, newline="") as f:
            rows = list(csv.DictReader(f))
        assert list(rows[0].keys()) == GATE_TRACE_COLUMNS
        assert len(rows) == 6
        assert all(0.0 <= float(r["cir"]) <= 2.0 for r in rows)
        assert all(0.0 <= float(r["gate_value"]) <= 1.0 for r in rows)
        assert [r["sample"] for r in rows[:3]] == ["0", "1", "2"]

    def test_eval_records_use_hard_gates(self):
        """Test that inference traces store the binary gate"""
        record = GateTraceRecord.from_decision(_decision(relaxed=False), 1, 2, "eval")
        assert set(record.gate_value.tolist()) <= {0.0, 1.0}
        assert record.mode == "eval"

    def test_append_keeps_single_header(self, service):
        """Test that appending to an existing trace does not repeat the header"""
        service.append_gate_trace([GateTraceRecord.from_decision(_decision(), 0, 0, "train")])
        service.append_gate_trace([GateTraceRecord.from_decision(_decision(), 0, 1, "train")])
        with open(service.trace_path) as f:
            lines = f.read().splitlines()
        assert len(lines) == 1 + 6
        assert lines[0] == ",".join(GATE_TRACE_COLUMNS)


class TestTelemetryService:
    """Test the run directory store"""

    def test_append_and_read(self, service):
        """Test incremental epoch appends"""
        service.append_epoch(_metrics(0))
        service.append_epoch(_metrics(1))
        assert [m.epoch for m in service.read_metrics()] == [0, 1]

    def test_reset(self, service):
        """Test that reset clears a previous run's metrics"""
        service.append_epoch(_metrics(0))
        service.reset()
        assert not os.path.exists(service.metrics_path)

    def test_run_metadata(self, service):
        """Test that numpy values are serialized and a timestamp is added"""
        service.write_run_metadata({"peak_acc": np.float32(91.5), "per_block": np.array([1.0, 2.0])})
        data = service.read_run_metadata()
        assert data["peak_acc"] == pytest.approx(91.5)
        assert data["per_block"] == [1.0, 2.0]
        assert data["written_at"].endswith("+00:00")

    def test_divergence_dump(self, service):
        """Test the JSON dump of a diverged batch"""
        path = service.dump_divergence(3, 7, [_decision(), _decision(block=1, relaxed=False)], {"total": float("nan")})
        assert os.path.basename(path) == "divergence_epoch3_batch7.json"
        with open(path) as f:
            data = json.load(f)
        assert data["epoch"] == 3 and data["batch"] == 7
        assert len(data["decisions"]) == 2
        assert data["decisions"][1]["relaxed"] is None


class TestGuards:
    """Test numeric guards and command error records"""

    def test_finite_value_passes(self):
        """Test that a finite value is returned unchanged"""
        assert finite_guard(1.25, "loss") == 1.25

    def test_nan_raises_with_dump(self, tmp_path):
        """Test that NaN raises TrainingDivergedError carrying the dump path"""
        with pytest.raises(TrainingDivergedError) as exc_info:
            finite_guard(float("nan"), "loss", on_failure=lambda: str(tmp_path / "dump.json"))
        assert exc_info.value.dump_path.endswith("dump.json")

    def test_failing_dump_still_raises(self):
        """Test that an error while dumping does not mask the divergence"""

        def broken():
            raise OSError("disk full")

        with pytest.raises(TrainingDivergedError):
            finite_guard(float("inf"), "loss", on_failure=broken)

    @pytest.mark.parametrize(
        "error, code, kind",
        [
            (ConfigurationError("bad preset"), EXIT_USAGE, "Input Error"),
            (DataFormatError("truncated"), EXIT_USAGE, "Input Error"),
            (FileNotFoundError("missing"), EXIT_USAGE, "Input Error"),
            (TrainingDivergedError("nan", dump_path="d.json"), EXIT_DIVERGED, "Training Diverged"),
            (ShapeError("mismatch"), EXIT_FAILURE, "Engine Error"),
            (RuntimeError("boom"), EXIT_FAILURE, "Internal Error"),
        ],
    )
    def test_error_classification(self, error, code, kind):
        """Test exit codes and error records per exception type"""
        assert ErrorHandler.exit_code(error) == code
        record = ErrorHandler.describe(error, command="train")
        assert record["error"] == kind
        assert record["command"] == "train"
        assert record["type"] == type(error).__name__

    def test_dump_in_record(self):
        """Test that a divergence record names the dump file"""
        record = ErrorHandler.describe(TrainingDivergedError("nan", dump_path="d.json"))
        assert record["dump"] == "d.json"

    def test_finite_parameters_pass(self):
        """Test that finite parameters pass the parameter guard"""
        finite_parameters_guard([("w", Parameter([1.0, 2.0]))], "update")

    def test_non_finite_parameter_is_named(self, tmp_path):
        """Test that the parameter guard names the first non-finite parameter and attaches the dump"""
        params = [("w", Parameter([1.0])), ("b", Parameter([0.0, np.nan]))]
        with pytest.raises(TrainingDivergedError) as exc_info:
            finite_parameters_guard(params, "update", on_failure=lambda: str(tmp_path / "dump.json"))
        assert "parameter b" in str(exc_info.value)
        assert exc_info.value.dump_path.endswith("dump.json")

    @pytest.mark.parametrize("debug", [True, False])
    def test_trace_follows_debug_setting(self, debug):
        """Test that an unhandled error carries a trace only when the CLI settings have DEBUG on"""

        @click.command()
        @command_error_handler("boom")
        def boom():
            raise RuntimeError("boom")

        result = CliRunner().invoke(boom, obj={"settings": SimpleNamespace(DEBUG=debug)})
        assert result.exit_code == EXIT_FAILURE
        record = json.loads([line for line in result.output.splitlines() if line.startswith("{")][-1])
        assert record["error"] == "Internal Error"
        assert ("trace" in record) is debug


class TestMonitoring:
    """Test resource snapshots and epoch timing"""

    def test_snapshot(self):
        """Test that a snapshot reports process memory"""
        snapshot = ResourceMonitor.snapshot()
        assert "timestamp" in snapshot
        assert snapshot["process"]["rss_mb"] > 0

    def test_middleware_logs_and_returns(self, caplog):
        """Test that the decorator passes through results and logs timing"""

        @epoch_metrics_middleware("unit")
        def work(x):
            return x * 2

        with caplog.at_level(logging.INFO, logger="src.middleware.monitoring"):
            assert work(21) == 42
        assert "EPOCH_METRICS: unit work" in caplog.text

    def test_middleware_reraises(self, caplog):
        """Test that failures are logged and re-raised"""

        @epoch_metrics_middleware()
        def fail():
            raise ValueError("nope")

        with caplog.at_level(logging.INFO, logger="src.middleware.monitoring"):
            with pytest.raises(ValueError):
                fail()
        assert "success=False" in caplog.text


class TestLogging:
    """Test logging setup"""

    def test_setup_creates_log_file(self, tmp_path):
        """Test that setup creates the log directory and does not stack handlers"""

        class Settings:
            LOG_LEVEL = "INFO"
            LOG_FILE = str(tmp_path / "logs" / "run.log")

        setup_logging(Settings)
        setup_logging(Settings)
        tagged = [h for h in logging.getLogger().handlers if getattr(h, "_cosinegate", False)]
        assert len(tagged) == 2
        assert os.path.isdir(tmp_path / "logs")

    def test_epoch_log_line(self, caplog):
        """Test the structured epoch line"""
        with caplog.at_level(logging.INFO, logger="cosinegate.training"):
            log_epoch_metrics(_metrics(2), phase="exploration")
        assert "Epoch: " in caplog.text
        assert "'phase': 'exploration'" in caplog.text


class TestTimeUtil:
    """Test timestamp helpers"""

    @pytest.mark.parametrize("seconds, expected", [(1.234, "1.23s"), (75, "1m15s"), (3725, "1h02m05s")])
    def test_format_duration(self, seconds, expected):
        """Test human-readable durations"""
        assert format_duration(seconds) == expected

    def test_storage_is_utc(self):
        """Test that stored timestamps are converted to UTC"""
        dt = datetime(2024, 5, 1, 12, 30, tzinfo=timezone(timedelta(hours=2)))
        assert format_for_storage(dt) == "2024-05-01T10:30:00+00:00"

    def test_naive_is_treated_as_utc(self):
        """Test that a naive datetime is stored as UTC"""
        assert format_for_storage(datetime(2024, 1, 1)) == "2024-01-01T00:00:00+00:00"

    def test_run_stamp(self):
        """Test the run directory stamp format"""
        assert run_stamp(datetime(2024, 1, 2, 3, 4, 5)) == "20240102_030405"
