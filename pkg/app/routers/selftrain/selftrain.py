import logging
from pathlib import Path
from typing import Optional

import typer

from ...context import build_matcher, console, output_path, reports_errors, resolve, start_run_log
from ...exceptions import UsageError
from ...function.evalharness import format_table, report_json, report_table
from ...function.selftrain import evaluate_model, self_train
from ...function.unary_model import init_model, load_checkpoint
from ...schemas import ModelRow, Solver
from ...store import load_corpus

logger = logging.getLogger(__name__)


@reports_errors
def selftrain(
    ctx: typer.Context,
    corpus: Path = typer.Option(..., "--corpus", help="Target corpus; ground truth is used for evaluation only."),
    init: str = typer.Option(..., "--init", help="Bootstrap checkpoint, or 'random' for an untrained start."),
    run_dir: Optional[Path] = typer.Option(None, "--run-dir", help="Checkpoints, run log and reports go here."),
    iterations: Optional[int] = typer.Option(None, "--iterations"),
    solver: Optional[Solver] = typer.Option(None, "--solver"),
    filter_off: bool = typer.Option(False, "--filter-off", help="Train on every solved pixel (ablation)."),
    epsilon: Optional[float] = typer.Option(None, "--epsilon"),
    epochs: Optional[int] = typer.Option(None, "--epochs"),
    learning_rate: Optional[float] = typer.Option(None, "--lr"),
    half_resolution: bool = typer.Option(False, "--half-resolution"),
    census_baseline: bool = typer.Option(True, "--census-baseline/--no-census-baseline"),
    metric: bool = typer.Option(False, "--metric", help="Also report depth accuracy in meters."),
    resume: bool = typer.Option(False, "--resume", help="Continue after the last persisted checkpoint."),
    seed: Optional[int] = typer.Option(None, "--seed"),
):
    """Alternate pseudo-label generation, consistency filtering and retraining."""
    config = resolve(
        ctx,
        **{
            "seed": seed,
            "selftrain.iterations": iterations,
            "selftrain.solver": solver,
            "selftrain.use_filter": False if filter_off else None,
            "selftrain.filter.epsilon": epsilon,
            "selftrain.train.epochs": epochs,
            "selftrain.train.learning_rate": learning_rate,
            "selftrain.half_resolution": True if half_resolution else None,
        },
    )
    cfg = config.selftrain
    target = output_path(run_dir, config, "selftrain")
    run_log = start_run_log(target, "selftrain", config, fresh=not resume)
    if init == "random":
        model = init_model(config.network, config.seed)
    elif Path(init).exists():
        model = load_checkpoint(Path(init), expected=config.network)
    else:
        raise UsageError(f"--init must be a checkpoint path or 'random', got {init!r}")
    pairs = load_corpus(corpus, cfg.half_resolution, config.jobs)
    camera = config.camera if metric else None

    results = self_train(
        pairs,
        model,
        cfg,
        target,
        pairwise=config.pairwise,
        eval_cfg=config.evaluation,
        camera=camera,
        resume=resume,
        jobs=config.jobs,
        run_log=run_log,
    )
    rows = []
    if census_baseline:
        baseline = build_matcher(config, None, census=True, solver=Solver.sgm)
        report = evaluate_model(pairs, baseline, cfg, config.evaluation, camera, config.jobs, run="census-sgm")
        if report is not None:
            rows.append(ModelRow(name="census-sgm", report=report))
    labels = ["bootstrap" if init != "random" else "random-init"] + [f"iter{r.iteration}" for r in results[1:]]
    rows += [ModelRow(name=label, report=r.report) for label, r in zip(labels, results) if r.report is not None]
    if not rows:
        logger.warning("corpus has no ground truth, nothing to evaluate")
        return
    (target / "report.json").write_bytes(report_json(rows))
    (target / "report.txt").write_text(format_table(rows, config.evaluation) + "\n")
    console.print(report_table(rows, config.evaluation))
