"""
Accuracy/efficiency summary across finished runs
"""

import logging
import os
from dataclasses import dataclass
from typing import List, Sequence

from tabulate import tabulate

from src.services.telemetry import TelemetryService
from src.utils.errors import DataFormatError

logger = logging.getLogger(__name__)


@dataclass
class RunSummary:
    name: str
    run_dir: str
    final_acc: float
    peak_acc: float
    peak_epoch: int
    final_g: float
    skip_pct: float
    pareto: bool = False


def summarize_run(run_dir: str) -> RunSummary:
    telemetry = TelemetryService(run_dir)
    if not os.path.exists(telemetry.metrics_path):
        raise DataFormatError(f"{run_dir}: no metrics CSV")
    metrics = telemetry.read_metrics()
    if not metrics:
        raise DataFormatError(f"{run_dir}: metrics CSV has no epochs")
    name = os.path.basename(os.path.normpath(run_dir))
    try:
        name = telemetry.read_run_metadata()["config"]["name"]
    except (OSError, KeyError, ValueError):
        logger.warning(f"{run_dir}: no run metadata, using directory name")
    peak = max(metrics, key=lambda m: m.test_acc)
    final = metrics[-1]
    return RunSummary(
        name=name,
        run_dir=run_dir,
        final_acc=final.test_acc,
        peak_acc=peak.test_acc,
        peak_epoch=peak.epoch,
        final_g=final.g_bar,
        skip_pct=final.skip_pct,
    )


def mark_pareto(summaries: Sequence[RunSummary]) -> List[RunSummary]:
    """A run is Pareto-optimal when no other run has accuracy >= and ḡ <= with one strict"""
    for s in summaries:
        s.pareto = not any(
            o is not s
            and o.final_acc >= s.final_acc
            and o.final_g <= s.final_g
            and (o.final_acc > s.final_acc or o.final_g < s.final_g)
            for o in summaries
        )
    return list(summaries)


def frontier_table(summaries: Sequence[RunSummary], tablefmt: str = "simple") -> str:
    headers = ["config", "final acc", "peak acc", "peak epoch", "final ḡ", "skip %", "pareto"]
    rows = [
        [s.name, s.final_acc, s.peak_acc, s.peak_epoch, s.final_g, s.skip_pct, "*" if s.pareto else ""]
        for s in sorted(summaries, key=lambda s: -s.final_acc)
    ]
    return tabulate(rows, headers=headers, tablefmt=tablefmt, floatfmt=".3f")
