"""
Run telemetry service
Owns a run directory: metrics CSV, gate traces, run metadata, checkpoints
and divergence dumps.
"""

import csv
import json
import logging
import os
from typing import Any, Dict, Iterable, List, Optional, Sequence

import numpy as np
from tabulate import tabulate

from src.gating.gate import GateDecision
from src.services.records import GATE_TRACE_COLUMNS, EpochMetrics, GateTraceRecord
from src.utils.time_util import format_for_storage, get_current_utc

logger = logging.getLogger(__name__)

METRICS_FILE = "metrics.csv"
TRACE_FILE = "gate_trace.csv"
RUN_FILE = "run.json"
BEST_CHECKPOINT = "best.cgv"
FINAL_CHECKPOINT = "final.cgv"


def _ensure_parent(path: str):
    parent = os.path.dirname(path)
    if parent and not os.path.exists(parent):
        os.makedirs(parent)


def export_metrics_csv(metrics: Sequence[EpochMetrics], path: str):
    """Header row plus one row per epoch, columns in EpochMetrics order"""
    _ensure_parent(path)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(EpochMetrics.columns())
        for m in metrics:
            writer.writerow(m.to_row())


def read_metrics_csv(path: str) -> List[EpochMetrics]:
    with open(path, "r", newline="", encoding="utf-8") as f:
        return [EpochMetrics.from_row(row) for row in csv.DictReader(f)]


def dump_gate_trace(records: Iterable[GateTraceRecord], path: str, append: bool = False) -> int:
    """Write one CSV row per (batch, block, sample); returns the number of records written"""
    _ensure_parent(path)
    write_header = not (append and os.path.exists(path))
    count = 0
    with open(path, "a" if append else "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        if write_header:
            writer.writerow(GATE_TRACE_COLUMNS)
        for record in records:
            writer.writerows(record.rows())
            count += 1
    return count


def metrics_table(metrics: Sequence[EpochMetrics], tablefmt: str = "simple") -> str:
    headers = ["epoch", "train acc", "test acc", "CE", "cons", "flops", "ḡ", "skip %", "lr", "prog"]
    rows = [
        [m.epoch, m.train_acc, m.test_acc, m.ce, m.cons, m.flops, m.g_bar, m.skip_pct, m.lr, m.prog] for m in metrics
    ]
    return tabulate(rows, headers=headers, tablefmt=tablefmt, floatfmt=".4f")


class TelemetryService:
    """File-backed store for one training run"""

    def __init__(self, out_dir: str):
        self.out_dir = out_dir
        os.makedirs(out_dir, exist_ok=True)
        self.logger = logger

    def path(self, name: str) -> str:
        return os.path.join(self.out_dir, name)

    @property
    def metrics_path(self) -> str:
        return self.path(METRICS_FILE)

    @property
    def trace_path(self) -> str:
        return self.path(TRACE_FILE)

    def reset(self):
        """Remove artifacts of a previous run in the same directory"""
        for name in (METRICS_FILE, TRACE_FILE):
            if os.path.exists(self.path(name)):
                os.remove(self.path(name))

    def append_epoch(self, metrics: EpochMetrics):
        write_header = not os.path.exists(self.metrics_path)
        with open(self.metrics_path, "a", newline="", encoding="utf-8") as f:
            writer = csv.writer(f, lineterminator="\n")
            if write_header:
                writer.writerow(EpochMetrics.columns())
            writer.writerow(metrics.to_row())

    def export_metrics_csv(self, metrics: Sequence[EpochMetrics], path: Optional[str] = None) -> str:
        path = path or self.metrics_path
        export_metrics_csv(metrics, path)
        return path

    def read_metrics(self) -> List[EpochMetrics]:
        return read_metrics_csv(self.metrics_path)

    def append_gate_trace(self, records: Sequence[GateTraceRecord]) -> int:
        return dump_gate_trace(records, self.trace_path, append=True)

    def write_run_metadata(self, metadata: Dict[str, Any]) -> str:
        payload = dict(metadata)
        payload.setdefault("written_at", format_for_storage(get_current_utc()))
        with open(self.path(RUN_FILE), "w", encoding="utf-8") as f:
            json.dump(payload, f, indent=2, sort_keys=True, default=_jsonable)
        return self.path(RUN_FILE)

    def read_run_metadata(self) -> Dict[str, Any]:
        with open(self.path(RUN_FILE), "r", encoding="utf-8") as f:
            return json.load(f)

    def dump_divergence(
        self, epoch: int, batch: int, decisions: Sequence[GateDecision], losses: Dict[str, float]
    ) -> str:
        """JSON dump of the offending batch's gate decisions"""
        path = self.path(f"divergence_epoch{epoch}_batch{batch}.json")
        payload = {
            "epoch": epoch,
            "batch": batch,
            "losses": losses,
            "timestamp": format_for_storage(get_current_utc()),
            "decisions": [
                {
                    "block": d.block_index,
                    "cir": d.cir.data.tolist(),
                    "controller_out": d.controller_out.data.tolist(),
                    "logit": d.logit.data.tolist(),
                    "relaxed": None if d.relaxed is None else d.relaxed.data.tolist(),
                    "hard": np.asarray(d.hard).tolist(),
                }
                for d in decisions
            ],
        }
        with open(path, "w", encoding="utf-8") as f:
            json.dump(payload, f, indent=2, default=_jsonable)
        self.logger.error(f"Divergence dump written to {path}")
        return path


def _jsonable(value):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f"{type(value).__name__} is not JSON serializable")
