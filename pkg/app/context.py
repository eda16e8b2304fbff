"""Shared plumbing for the command routers."""

import functools
from pathlib import Path
from typing import Any, Callable, Dict, Optional, TypeVar

import typer
from rich.console import Console

from .config import Settings, dump_config, load_config
from .exceptions import SelfStereoError, UsageError
from .function.matching import Matcher
from .function.unary_model import load_checkpoint
from .log import RunLog, setup_logging
from .schemas import Solver
from .store import RUN_LOG

F = TypeVar("F", bound=Callable[..., Any])


def resolve(ctx: typer.Context, **overrides: Any) -> Settings:
    """Settings for one command: command flags over global flags over file/env/defaults."""
    options: Dict[str, Any] = ctx.obj or {}
    merged = dict(options.get("overrides", {}))
    merged.update({key: value for key, value in overrides.items() if value is not None})
    config = load_config(options.get("config"), merged)
    setup_logging(config.verbosity)
    return config


def reports_errors(func: F) -> F:
    """Turn library errors into their exit code, printing the detail on stderr."""

    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except SelfStereoError as exc:
            typer.echo(f"Error: {exc.detail}", err=True)
            raise typer.Exit(exc.exit_code) from exc

    return wrapper  # type: ignore[return-value]


def start_run_log(run_dir: Path, command: str, config: Settings, fresh: bool = True) -> RunLog:
    """Run log whose first record embeds the full resolved configuration."""
    run_log = RunLog(Path(run_dir) / RUN_LOG)
    if fresh and run_log.path.exists():
        run_log.path.unlink()
    run_log.write("config", command=command, config=config.model_dump(mode="json"))
    dump_config(config, Path(run_dir) / "config.yaml")
    return run_log


def build_matcher(config: Settings, model_path: Optional[Path], census: bool, solver: Optional[Solver] = None) -> Matcher:
    """Census baseline or a checkpointed model, with the pairwise term tuned for it."""
    solver = solver or config.selftrain.solver
    if census == (model_path is not None):
        raise UsageError("give exactly one of --model PATH or --census")
    if census:
        return Matcher(
            pairwise=config.census_pairwise,
            d_max=config.network.d_max,
            solver=solver,
            census_window=config.census_window,
        )
    model = load_checkpoint(model_path, expected=config.network)
    return Matcher(pairwise=config.pairwise, d_max=model.d_max, solver=solver, model=model)


def output_path(path: Optional[Path], config: Settings, default: str) -> Path:
    return Path(path) if path is not None else config.output_dir / default


console = Console()
