"""
Training and evaluation orchestration

One epoch = shuffled mini-batches, each: augment, gated forward, three-term
loss, tape backward, SGD step. The learning rate is set once at the start of
each epoch from the cosine schedule, and prog uses the number of completed
epochs.
"""

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, NamedTuple, Optional, Sequence, Union

import numpy as np

from src.config.presets import TrainConfig, load_train_config
from src.data.augment import AugmentConfig, augment_and_normalize, augment_config_for
from src.data.datasets import Dataset, batch_indices, load_dataset
from src.engine.tensor import GradientTape, Tensor
from src.gating.gate import temperature_at
from src.gating.noise import GumbelNoise, NoiseSource
from src.losses.objective import compute_objective, per_block_gate_means, prog_schedule, skip_percentage
from src.middleware.guards import finite_guard, finite_parameters_guard
from src.middleware.monitoring import ResourceMonitor, epoch_metrics_middleware
from src.models.network import EVAL, TRAIN, GatedNetwork, build_network, network_forward
from src.optim.sgd import SgdState, apply_schedule, sgd_step
from src.services.records import EpochMetrics, GateTraceRecord
from src.services.telemetry import BEST_CHECKPOINT, FINAL_CHECKPOINT, TelemetryService
from src.utils.errors import ConfigurationError
from src.utils.logging import log_epoch_metrics, log_gate_activity
from src.utils.time_util import format_for_storage, get_current_utc

logger = logging.getLogger(__name__)

EVAL_BATCH_SIZE = 256
CONVERGENCE_MARGIN = 0.02

EXPLORATION = "exploration"
ENFORCEMENT = "enforcement"
CONVERGENCE = "convergence"


def epoch_rng(seed: int, epoch: int) -> np.random.Generator:
    """Shuffle/augmentation stream for one epoch"""
    return np.random.default_rng(np.random.SeedSequence([seed, epoch]))


def phase_label(prog: float, flops: float, g_bar: float, tau_target: float) -> str:
    if prog >= 1.0 and g_bar <= tau_target + CONVERGENCE_MARGIN:
        return CONVERGENCE
    if flops > 0.0:
        return ENFORCEMENT
    return EXPLORATION


class _RunningMeans:
    def __init__(self):
        self.weight = 0
        self.sums: Dict[str, float] = {}
        self.correct = 0

    def add(self, values: Dict[str, float], batch: int, correct: int):
        for key, value in values.items():
            self.sums[key] = self.sums.get(key, 0.0) + float(value) * batch
        self.weight += batch
        self.correct += int(correct)

    def mean(self, key: str) -> float:
        return self.sums.get(key, 0.0) / max(self.weight, 1)

    @property
    def accuracy(self) -> float:
        return 100.0 * self.correct / max(self.weight, 1)


def _count_correct(logits: Tensor, labels: np.ndarray) -> int:
    return int(np.sum(np.argmax(logits.data, axis=1) == labels))


@epoch_metrics_middleware("train")
def train_epoch(
    net: GatedNetwork,
    ds: Dataset,
    cfg: TrainConfig,
    opt: SgdState,
    epoch: int,
    augment: Optional[AugmentConfig] = None,
    noise: Optional[NoiseSource] = None,
    telemetry: Optional[TelemetryService] = None,
    trace: bool = False,
    force_gate: Optional[float] = None,
) -> EpochMetrics:
    """Run one epoch of gated training; test_acc is left at 0 for the caller to fill"""
    if not net.training:
        raise ConfigurationError("train_epoch needs the network in train mode")
    augment = augment or augment_config_for(cfg.dataset)
    noise = noise or GumbelNoise(cfg.seed)
    rng = epoch_rng(cfg.seed, epoch)
    lr = apply_schedule(opt, epoch)
    prog = prog_schedule(epoch, cfg.warmup_epochs)
    tau = temperature_at(net.gate_cfg, epoch, cfg.epochs)

    batches = batch_indices(len(ds), cfg.batch_size, shuffle=True, rng=rng)
    running = _RunningMeans()
    params = net.parameters()
    for b, idx in enumerate(batches):
        step = epoch * len(batches) + b
        x = augment_and_normalize(ds.images[idx], augment, train=True, rng=rng)
        labels = ds.labels[idx]

        net.zero_grad()
        with GradientTape() as tape:
            out = network_forward(net, Tensor(x), TRAIN, noise, step, tau, force_gate)
            total, breakdown = compute_objective(out, labels, cfg.lambda_cons, cfg.lambda_flops, cfg.tau_target, prog)

        def _dump():
            return telemetry.dump_divergence(epoch, b, out.decisions, breakdown.to_dict()) if telemetry else None

        finite_guard(breakdown.total, f"total loss at epoch {epoch} batch {b}", on_failure=_dump)
        tape.backward(total)
        sgd_step(params, opt, skip_missing=force_gate is not None)
        finite_parameters_guard(net.named_parameters(), f"update at epoch {epoch} batch {b}", on_failure=_dump)

        running.add(breakdown.to_dict(), len(idx), _count_correct(out.logits, labels))
        if trace and telemetry is not None:
            telemetry.append_gate_trace([GateTraceRecord.from_decision(d, epoch, b, TRAIN) for d in out.decisions])
        logger.debug(f"epoch {epoch} batch {b}/{len(batches)} total={breakdown.total:.4f} g={breakdown.mean_gate:.3f}")
        if b == len(batches) - 1:
            for i, g in enumerate(per_block_gate_means(out.decisions)):
                log_gate_activity(i, {"epoch": epoch, "mean_gate": g})

    g_bar = running.mean("mean_gate")
    return EpochMetrics(
        epoch=epoch,
        train_acc=running.accuracy,
        test_acc=0.0,
        ce=running.mean("ce"),
        cons=running.mean("cons"),
        flops=running.mean("flops"),
        total=running.mean("total"),
        g_bar=g_bar,
        skip_pct=skip_percentage(g_bar),
        lr=lr,
        prog=prog,
    )


class EvalResult(NamedTuple):
    accuracy: float
    g_hard: float
    skip_pct: float
    per_block_skip: List[float]


def _eval_shard(
    net: GatedNetwork,
    ds: Dataset,
    augment: AugmentConfig,
    batches: Sequence[np.ndarray],
    first_batch: int,
    trace_epoch: Optional[int],
):
    correct = 0
    open_counts = np.zeros(len(net.blocks))
    records: List[GateTraceRecord] = []
    for offset, idx in enumerate(batches):
        x = augment_and_normalize(ds.images[idx], augment, train=False)
        out = network_forward(net, Tensor(x), EVAL)
        correct += _count_correct(out.logits, ds.labels[idx])
        for d in out.decisions:
            open_counts[d.block_index] += float(np.sum(d.hard))
        if trace_epoch is not None:
            batch = first_batch + offset
            records.extend(GateTraceRecord.from_decision(d, trace_epoch, batch, EVAL) for d in out.decisions)
    return correct, open_counts, records


def evaluate(
    net: GatedNetwork,
    ds: Dataset,
    cfg: Optional[TrainConfig] = None,
    augment: Optional[AugmentConfig] = None,
    workers: int = 1,
    batch_size: int = EVAL_BATCH_SIZE,
    trace: Optional[List[GateTraceRecord]] = None,
    trace_epoch: int = 0,
) -> EvalResult:
    """Hard-gated inference over ``ds``

    With workers > 1 contiguous runs of batches are evaluated on a thread
    pool; batch composition is the same as the sequential pass, so results
    are identical.
    """
    if workers < 1:
        raise ConfigurationError(f"workers must be >= 1, got {workers}")
    if len(ds) == 0:
        raise ConfigurationError("cannot evaluate on an empty dataset")
    net.set_mode(EVAL)
    augment = augment or augment_config_for(cfg.dataset if cfg else ds.name)
    batches = batch_indices(len(ds), batch_size, shuffle=False)
    trace_epoch_arg = trace_epoch if trace is not None else None

    bounds = np.linspace(0, len(batches), min(workers, len(batches)) + 1).astype(int)
    shards = [(batches[lo:hi], int(lo)) for lo, hi in zip(bounds[:-1], bounds[1:]) if hi > lo]
    if len(shards) == 1:
        results = [_eval_shard(net, ds, augment, shards[0][0], 0, trace_epoch_arg)]
    else:
        with ThreadPoolExecutor(max_workers=len(shards)) as pool:
            futures = [pool.submit(_eval_shard, net, ds, augment, s, first, trace_epoch_arg) for s, first in shards]
            results = [f.result() for f in futures]

    correct = sum(r[0] for r in results)
    open_counts = np.sum([r[1] for r in results], axis=0)
    if trace is not None:
        for r in results:
            trace.extend(r[2])

    per_block_open = open_counts / len(ds)
    g_hard = float(np.mean(per_block_open))
    for i, frac in enumerate(per_block_open):
        log_gate_activity(i, {"open_fraction": float(frac)})
    return EvalResult(
        accuracy=100.0 * correct / len(ds),
        g_hard=g_hard,
        skip_pct=skip_percentage(g_hard),
        per_block_skip=[skip_percentage(f) for f in per_block_open],
    )


@dataclass
class RunResult:
    config: TrainConfig
    metrics: List[EpochMetrics]
    phases: List[str]
    peak_acc: float
    peak_epoch: int
    best_checkpoint: str
    final_checkpoint: str
    final_eval: Optional[EvalResult] = None


def run_config(
    config: Union[str, TrainConfig],
    out_dir: str,
    data_dir: Optional[str] = None,
    train_ds: Optional[Dataset] = None,
    test_ds: Optional[Dataset] = None,
    trace_gates: bool = False,
    workers: int = 1,
    **overrides,
) -> RunResult:
    """Full training run: per-epoch CSV append, best-accuracy and final checkpoints, run summary"""
    cfg = config if isinstance(config, TrainConfig) else load_train_config(config, **overrides)
    cfg = cfg.validate()
    if train_ds is None or test_ds is None:
        if data_dir is None:
            raise ConfigurationError("data_dir is required when datasets are not supplied")
        train_ds = train_ds or load_dataset(cfg.dataset, data_dir, "train", cfg.subset_train)
        test_ds = test_ds or load_dataset(cfg.dataset, data_dir, "test", cfg.subset_test)
    else:
        train_ds, test_ds = train_ds.subset(cfg.subset_train), test_ds.subset(cfg.subset_test)

    telemetry = TelemetryService(out_dir)
    telemetry.reset()
    started = get_current_utc()
    net = build_network(cfg.dataset, cfg.seed, cfg.gate_config())
    opt = SgdState(lr0=cfg.lr0, momentum=cfg.momentum, weight_decay=cfg.weight_decay, total_epochs=cfg.epochs)
    augment = augment_config_for(cfg.dataset)
    noise = GumbelNoise(cfg.seed)
    best_path, final_path = telemetry.path(BEST_CHECKPOINT), telemetry.path(FINAL_CHECKPOINT)
    logger.info(
        f"Starting run '{cfg.name}' on {cfg.dataset}: {len(train_ds)} train / {len(test_ds)} test samples, "
        f"{cfg.epochs} epochs, output {out_dir}"
    )

    metrics: List[EpochMetrics] = []
    phases: List[str] = []
    peak_acc, peak_epoch = -1.0, -1
    result = None
    for epoch in range(cfg.epochs):
        net.set_mode(TRAIN)
        m = train_epoch(net, train_ds, cfg, opt, epoch, augment, noise, telemetry, trace_gates)
        trace = [] if trace_gates else None
        result = evaluate(net, test_ds, cfg, augment, workers=workers, trace=trace, trace_epoch=epoch)
        if trace:
            telemetry.append_gate_trace(trace)
        m.test_acc = result.accuracy
        metrics.append(m)
        telemetry.append_epoch(m)
        phase = phase_label(m.prog, m.flops, m.g_bar, cfg.tau_target)
        phases.append(phase)
        log_epoch_metrics(m, phase=phase)
        if m.test_acc > peak_acc:
            peak_acc, peak_epoch = m.test_acc, epoch
            net.save(best_path)
            logger.info(f"New best test accuracy {peak_acc:.2f}% at epoch {epoch}")

    net.save(final_path)
    telemetry.write_run_metadata(
        {
            "config": cfg.to_dict(),
            "started_at": format_for_storage(started),
            "phases": phases,
            "peak_acc": peak_acc,
            "peak_epoch": peak_epoch,
            "final": metrics[-1].to_dict(),
            "final_eval": result._asdict(),
            "parameters": net.parameter_count(),
            "resources": ResourceMonitor.snapshot(),
            "checkpoints": {"best": os.path.basename(best_path), "final": os.path.basename(final_path)},
        }
    )
    logger.info(
        f"Run '{cfg.name}' finished: final acc {metrics[-1].test_acc:.2f}%, peak {peak_acc:.2f}% @ {peak_epoch}"
    )
    return RunResult(cfg, metrics, phases, peak_acc, peak_epoch, best_path, final_path, result)
