import logging
from pathlib import Path
from typing import List, Optional

import click
import typer

from .config import settings
from .exceptions import SelfStereoError, UsageError
from .log import setup_logging
from .routers.eval import eval as evaluation
from .routers.filter import filter as consistency
from .routers.match import match
from .routers.selftrain import selftrain
from .routers.synth import synth
from .routers.train import train

logger = logging.getLogger(__name__)

app = typer.Typer(
    name="selfstereo",
    help="Self-supervised stereo matching: synthetic data, CRF matching, consistency filtering, self-training.",
    no_args_is_help=True,
    add_completion=False,
)


@app.callback()
def main(
    ctx: typer.Context,
    config: Optional[Path] = typer.Option(None, "--config", help="YAML configuration file."),
    seed: Optional[int] = typer.Option(None, "--seed", help="Global random seed."),
    jobs: Optional[int] = typer.Option(None, "--jobs", help="Worker threads for per-pair work."),
    output_dir: Optional[Path] = typer.Option(None, "--output-dir", help="Default root for outputs."),
    verbosity: Optional[int] = typer.Option(None, "--verbosity", "-v", help="0 warnings, 1 info, 2 debug."),
):
    setup_logging(settings.verbosity if verbosity is None else verbosity)
    ctx.obj = {
        "config": config,
        "overrides": {"seed": seed, "jobs": jobs, "output_dir": output_dir, "verbosity": verbosity},
    }


app.command("synth")(synth.synth)
app.command("match")(match.match)
app.command("filter")(consistency.filter_maps)
app.command("train")(train.train)
app.command("selftrain")(selftrain.selftrain)
app.command("eval")(evaluation.evaluate)


def run(argv: Optional[List[str]] = None) -> int:
    """Entry point returning the process exit code (1 usage, 2 data, 3 numerical)."""
    try:
        code = app(args=argv, prog_name="selfstereo", standalone_mode=False)
    except click.ClickException as exc:
        exc.show()
        return UsageError.exit_code
    except click.exceptions.Abort:
        return UsageError.exit_code
    except SelfStereoError as exc:
        logger.error("%s", exc.detail)
        return exc.exit_code
    return code if isinstance(code, int) else 0
