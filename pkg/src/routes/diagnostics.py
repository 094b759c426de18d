import logging
import sys

import click

from src.middleware.guards import EXIT_FAILURE, command_error_handler
from src.services.frontier import frontier_table, mark_pareto, summarize_run
from src.services.gradcheck_suite import CASES, gradcheck_table, run_gradcheck_suite

logger = logging.getLogger(__name__)


@click.command("gradcheck")
@click.option("--case", "cases", multiple=True, type=click.Choice(sorted(CASES)), help="Run only these cases")
@click.option("--seed", type=int, default=0, show_default=True)
@command_error_handler("gradcheck")
def gradcheck_command(cases, seed):
    """Compare tape gradients with central finite differences at 64-bit"""
    results = run_gradcheck_suite(list(cases) or None, seed)
    click.echo(gradcheck_table(results))
    failed = [r.name for r in results if not r.passed]
    if failed:
        click.echo(f"\n{len(failed)} of {len(results)} cases failed: {', '.join(failed)}", err=True)
        sys.exit(EXIT_FAILURE)
    click.echo(f"\nAll {len(results)} cases passed")


@click.command("frontier")
@click.argument("run_dirs", nargs=-1, required=True, type=click.Path(exists=True, file_okay=False))
@command_error_handler("frontier")
def frontier_command(run_dirs):
    """Tabulate finished runs and mark the accuracy/efficiency Pareto set"""
    summaries = mark_pareto([summarize_run(d) for d in run_dirs])
    click.echo(frontier_table(summaries))
