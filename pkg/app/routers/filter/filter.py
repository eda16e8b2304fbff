from pathlib import Path
from typing import Optional

import typer
from rich.table import Table

from ...context import console, output_path, reports_errors, resolve
from ...exceptions import DataError
from ...function.consistency import lr_check, survivor_stats
from ...function.imaging import load_pfm, save_mask, save_pfm
from ...store import disparity_path


@reports_errors
def filter_maps(
    ctx: typer.Context,
    source: Path = typer.Option(..., "--in", help="Directory with <name>_left.pfm / <name>_right.pfm pairs."),
    out: Optional[Path] = typer.Option(None, "--out", help="Output directory."),
    epsilon: Optional[float] = typer.Option(None, "--epsilon", help="Consistency threshold in pixels."),
):
    """Left-right consistency check; writes filtered left maps and validity masks."""
    config = resolve(ctx, **{"consistency.epsilon": epsilon})
    stems = sorted(path.name[: -len("_left.pfm")] for path in Path(source).glob("*_left.pfm"))
    if not stems:
        raise DataError(f"no *_left.pfm maps in {source}")
    target = output_path(out, config, "filtered")
    target.mkdir(parents=True, exist_ok=True)

    table = Table(title=f"Left-right check (epsilon {config.consistency.epsilon:g})")
    table.add_column("Pair")
    table.add_column("Survivors", justify="right")
    table.add_column("Fraction [%]", justify="right")
    for stem in stems:
        right = disparity_path(source, stem, "right")
        if not right.exists():
            raise DataError(f"{stem}: missing right-reference map {right}")
        filtered = lr_check(load_pfm(disparity_path(source, stem, "left")), load_pfm(right), config.consistency)
        save_pfm(filtered, disparity_path(target, stem, "left"))
        save_mask(filtered.valid, target / f"{stem}_mask.pgm")
        fraction, count = survivor_stats(filtered)
        table.add_row(stem, str(count), f"{100 * fraction:.1f}")
    console.print(table)
