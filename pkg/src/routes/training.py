import logging
import os

import click

from src.config.presets import DATASETS
from src.middleware.guards import command_error_handler
from src.services.telemetry import metrics_table
from src.services.trainer import run_config
from src.utils.time_util import format_duration, get_current_utc, run_stamp

logger = logging.getLogger(__name__)


@click.command("train")
@click.option(
    "--preset", default="balanced", show_default=True, help="aggressive|balanced|conservative or a JSON run config"
)
@click.option("--dataset", type=click.Choice(DATASETS), default=None, help="Overrides the preset's dataset")
@click.option("--data-dir", type=click.Path(exists=True, file_okay=False), required=True)
@click.option("--epochs", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default=None, help="Run directory")
@click.option("--subset-train", type=int, default=None)
@click.option("--subset-test", type=int, default=None)
@click.option("--warmup-epochs", type=int, default=None)
@click.option("--batch-size", type=int, default=None)
@click.option("--tau-target", type=float, default=None)
@click.option("--trace-gates", is_flag=True, default=False, help="Write per-sample CIR and gate values")
@click.option("--workers", type=int, default=None, help="Evaluation threads")
@click.pass_obj
@command_error_handler("train")
def train_command(
    obj,
    preset,
    dataset,
    data_dir,
    epochs,
    seed,
    out_dir,
    subset_train,
    subset_test,
    warmup_epochs,
    batch_size,
    tau_target,
    trace_gates,
    workers,
):
    """Train a gated network and write metrics, checkpoints and a run summary"""
    settings = obj["settings"]
    name = os.path.splitext(os.path.basename(preset))[0]
    out_dir = out_dir or os.path.join(settings.OUTPUT_DIR, f"{name}_{run_stamp()}")
    started = get_current_utc()

    result = run_config(
        preset,
        out_dir,
        data_dir=data_dir,
        trace_gates=trace_gates,
        workers=workers or settings.EVAL_WORKERS,
        dataset=dataset,
        epochs=epochs,
        seed=seed,
        subset_train=subset_train,
        subset_test=subset_test,
        warmup_epochs=warmup_epochs,
        batch_size=batch_size,
        tau_target=tau_target,
    )

    elapsed = (get_current_utc() - started).total_seconds()
    final = result.metrics[-1]
    click.echo(metrics_table(result.metrics))
    click.echo(
        f"\n{result.config.name}: final acc {final.test_acc:.2f}% | peak {result.peak_acc:.2f}% @ epoch "
        f"{result.peak_epoch} | ḡ {final.g_bar:.3f} | skip {final.skip_pct:.1f}% | {format_duration(elapsed)}"
    )
    click.echo(f"Artifacts written to {out_dir}")
