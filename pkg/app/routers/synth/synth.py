from pathlib import Path
from typing import Optional

import typer

from ...context import console, output_path, reports_errors, resolve
from ...function.synthgen import generate_corpus
from ...schemas import DomainShift, TextureStyle


@reports_errors
def synth(
    ctx: typer.Context,
    out: Optional[Path] = typer.Option(None, "--out", help="Corpus directory (created if missing)."),
    pairs: Optional[int] = typer.Option(None, "--pairs", help="Number of stereo pairs."),
    width: Optional[int] = typer.Option(None, "--width"),
    height: Optional[int] = typer.Option(None, "--height"),
    d_max: Optional[int] = typer.Option(None, "--d-max", help="Number of disparity levels."),
    channels: Optional[int] = typer.Option(None, "--channels"),
    noise: Optional[float] = typer.Option(None, "--noise", help="Per-pixel Gaussian noise sigma."),
    texture: Optional[TextureStyle] = typer.Option(None, "--texture"),
    domain_shift: Optional[DomainShift] = typer.Option(None, "--domain-shift"),
    rectangles: Optional[int] = typer.Option(None, "--rectangles"),
    seed: Optional[int] = typer.Option(None, "--seed"),
):
    """Generate a synthetic stereo corpus with exact ground truth."""
    config = resolve(
        ctx,
        **{
            "seed": seed,
            "corpus.n_pairs": pairs,
            "corpus.width": width,
            "corpus.height": height,
            "corpus.d_max": d_max,
            "corpus.channels": channels,
            "corpus.noise_sigma": noise,
            "corpus.texture_style": texture,
            "corpus.domain_shift": domain_shift,
            "corpus.n_rectangles": rectangles,
        },
    )
    target = output_path(out, config, "corpus")
    scenes = generate_corpus(config.corpus, config.seed, target, jobs=config.jobs)
    console.print(f"wrote {len(scenes)} pairs to {target}")
