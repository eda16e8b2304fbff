from pathlib import Path
from typing import Optional

import typer

from ...context import console, output_path, reports_errors, resolve, start_run_log
from ...function.selftrain import samples_from_ground_truth, samples_from_label_dir, tile_samples, train_epochs
from ...function.unary_model import init_model, load_checkpoint, save_checkpoint
from ...schemas import OptimizerKind
from ...store import load_corpus


@reports_errors
def train(
    ctx: typer.Context,
    corpus: Path = typer.Option(..., "--corpus", help="Corpus directory."),
    labels: str = typer.Option("gt", "--labels", help="'gt' or a directory of <name>_left.pfm label maps."),
    out: Optional[Path] = typer.Option(None, "--out", help="Checkpoint to write."),
    init: Optional[Path] = typer.Option(None, "--init", help="Start from this checkpoint instead of a random model."),
    epochs: Optional[int] = typer.Option(None, "--epochs"),
    learning_rate: Optional[float] = typer.Option(None, "--lr"),
    optimizer: Optional[OptimizerKind] = typer.Option(None, "--optimizer"),
    batch: Optional[int] = typer.Option(None, "--batch"),
    tile_h: Optional[int] = typer.Option(None, "--tile-h"),
    tile_w: Optional[int] = typer.Option(None, "--tile-w"),
    half_resolution: bool = typer.Option(False, "--half-resolution"),
    seed: Optional[int] = typer.Option(None, "--seed"),
):
    """Train a unary model on ground truth or on filtered labels (bootstrap pre-training)."""
    config = resolve(
        ctx,
        **{
            "seed": seed,
            "train.epochs": epochs,
            "train.learning_rate": learning_rate,
            "train.optimizer": optimizer,
            "train.batch": batch,
            "train.tile_h": tile_h,
            "train.tile_w": tile_w,
        },
    )
    checkpoint = output_path(out, config, "bootstrap.bin")
    run_log = start_run_log(checkpoint.parent, "train", config)
    pairs = load_corpus(corpus, half_resolution, config.jobs)
    samples = samples_from_ground_truth(pairs) if labels == "gt" else samples_from_label_dir(pairs, Path(labels))
    if config.train.tile_h and config.train.tile_w:
        samples = tile_samples(samples, config.train.tile_h, config.train.tile_w, config.network.d_max)
    model = load_checkpoint(init, expected=config.network) if init else init_model(config.network, config.seed)
    model, curve = train_epochs(model, samples, config.train, jobs=config.jobs, run_log=run_log)
    save_checkpoint(model, checkpoint)
    run_log.write("checkpoint", iteration=0, path=str(checkpoint))
    console.print(f"trained on {len(samples)} samples, loss {curve[0]:.4f} -> {curve[-1]:.4f}; wrote {checkpoint}")
