"""
Per-epoch metric rows and per-batch gate trace records
"""

from dataclasses import asdict, dataclass, fields
from typing import Dict, List

import numpy as np

from src.gating.gate import GateDecision
from src.utils.errors import DataFormatError


@dataclass
class EpochMetrics:
    epoch: int
    train_acc: float
    test_acc: float
    ce: float
    cons: float
    flops: float
    total: float
    g_bar: float
    skip_pct: float
    lr: float
    prog: float

    @classmethod
    def columns(cls) -> List[str]:
        return [f.name for f in fields(cls)]

    def to_dict(self) -> Dict[str, float]:
        return asdict(self)

    def to_row(self) -> List[str]:
        return [str(int(self.epoch))] + [repr(float(getattr(self, c))) for c in self.columns()[1:]]

    @classmethod
    def from_row(cls, row: Dict[str, str]) -> "EpochMetrics":
        try:
            values = {c: float(row[c]) for c in cls.columns()}
        except (KeyError, ValueError) as e:
            raise DataFormatError(f"malformed metrics row {row}: {e}") from e
        values["epoch"] = int(values["epoch"])
        return cls(**values)


GATE_TRACE_COLUMNS = ["epoch", "batch", "block", "sample", "cir", "gate_value", "mode"]


@dataclass
class GateTraceRecord:
    """One (batch, block) routing record; cir and gate values are per sample"""

    epoch: int
    batch: int
    block: int
    cir: np.ndarray
    gate_value: np.ndarray
    mode: str

    @classmethod
    def from_decision(cls, decision: GateDecision, epoch: int, batch: int, mode: str) -> "GateTraceRecord":
        return cls(
            epoch=epoch,
            batch=batch,
            block=decision.block_index,
            cir=np.array(decision.cir.data, dtype=np.float64).reshape(-1),
            gate_value=np.array(decision.gate_values, dtype=np.float64).reshape(-1),
            mode=mode,
        )

    def rows(self):
        for sample, (c, g) in enumerate(zip(self.cir, self.gate_value)):
            yield [self.epoch, self.batch, self.block, sample, repr(float(c)), repr(float(g)), self.mode]
