import json
import logging

import click
from tabulate import tabulate

from src.config.presets import DATASETS
from src.data.datasets import load_dataset
from src.gating.gate import DEFAULT_THRESHOLD, GateConfig
from src.middleware.guards import command_error_handler
from src.models.network import build_network
from src.services.telemetry import dump_gate_trace
from src.services.trainer import evaluate

logger = logging.getLogger(__name__)


@click.command("eval")
@click.option("--checkpoint", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--dataset", type=click.Choice(DATASETS), required=True)
@click.option("--data-dir", type=click.Path(exists=True, file_okay=False), required=True)
@click.option("--subset-test", type=int, default=None)
@click.option("--threshold", type=float, default=DEFAULT_THRESHOLD, show_default=True, help="Inference gate threshold")
@click.option("--workers", type=int, default=None)
@click.option("--trace", "trace_path", type=click.Path(dir_okay=False), default=None, help="Write a gate trace CSV")
@click.option("--json", "as_json", is_flag=True, default=False)
@click.pass_obj
@command_error_handler("eval")
def eval_command(obj, checkpoint, dataset, data_dir, subset_test, threshold, workers, trace_path, as_json):
    """Evaluate a checkpoint with deterministic gates"""
    settings = obj["settings"]
    net = build_network(dataset, 0, GateConfig(inference_threshold=threshold))
    net.load(checkpoint)
    test_ds = load_dataset(dataset, data_dir, "test", subset_test)

    trace = [] if trace_path else None
    result = evaluate(net, test_ds, workers=workers or settings.EVAL_WORKERS, trace=trace)
    if trace_path:
        count = dump_gate_trace(trace, trace_path)
        logger.info(f"Wrote {count} gate trace records to {trace_path}")

    if as_json:
        click.echo(json.dumps(result._asdict()))
        return
    rows = [[i, skip] for i, skip in enumerate(result.per_block_skip)]
    click.echo(tabulate(rows, headers=["block", "skip %"], floatfmt=".1f"))
    click.echo(
        f"\naccuracy {result.accuracy:.2f}% | ḡ_hard {result.g_hard:.3f} | skip {result.skip_pct:.1f}% "
        f"({len(test_ds)} samples)"
    )
