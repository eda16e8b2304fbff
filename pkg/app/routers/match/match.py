import logging
from pathlib import Path
from typing import List, Optional, Tuple

import typer

from ...context import build_matcher, console, output_path, reports_errors, resolve
from ...exceptions import UsageError
from ...function.crf import subpixel_refine
from ...function.imaging import downscale_pair, load_image, save_disparity_png, save_pfm
from ...function.matching import Matcher, cost_volume, disparity_pair, disparity_tiled
from ...models import DisparityMap, ImagePair
from ...schemas import Solver
from ...store import disparity_path, load_corpus
from ...tools import ordered_map

logger = logging.getLogger(__name__)


def _match_one(
    pair: ImagePair, matcher: Matcher, refine: bool, tile: Optional[Tuple[int, int]]
) -> Tuple[DisparityMap, DisparityMap]:
    if tile is None:
        d_l, d_r, cost = disparity_pair(pair, matcher)
    else:
        d_l = disparity_tiled(pair, matcher, *tile)
        d_r = disparity_tiled(pair.mirrored(), matcher, *tile).mirrored()
        cost = cost_volume(pair, matcher) if refine else None
    if refine:
        d_l = subpixel_refine(cost, d_l)
    return d_l, d_r


@reports_errors
def match(
    ctx: typer.Context,
    left: Optional[Path] = typer.Option(None, "--left", help="Left image of a single pair."),
    right: Optional[Path] = typer.Option(None, "--right", help="Right image of a single pair."),
    name: str = typer.Option("pair", "--name", help="File stem for a single pair."),
    corpus: Optional[Path] = typer.Option(None, "--corpus", help="Match every pair of a corpus directory."),
    model: Optional[Path] = typer.Option(None, "--model", help="Model checkpoint."),
    census: bool = typer.Option(False, "--census", help="Use the census baseline instead of a model."),
    solver: Optional[Solver] = typer.Option(None, "--solver"),
    out: Optional[Path] = typer.Option(None, "--out", help="Output directory."),
    png: bool = typer.Option(True, "--png/--no-png", help="Also write colour-coded left disparity."),
    refine: bool = typer.Option(False, "--refine/--no-refine", help="Subpixel-refine the left map."),
    half_resolution: bool = typer.Option(False, "--half-resolution"),
    tile_h: Optional[int] = typer.Option(None, "--tile-h"),
    tile_w: Optional[int] = typer.Option(None, "--tile-w"),
    d_max: Optional[int] = typer.Option(None, "--d-max", help="Disparity levels of the census baseline."),
):
    """Compute left- and right-reference disparity maps (PFM)."""
    config = resolve(ctx, **{"network.d_max": d_max})
    matcher = build_matcher(config, model, census, solver)
    if corpus is not None:
        if left is not None or right is not None:
            raise UsageError("give either --corpus or --left/--right")
        items = [(item.name, item.pair) for item in load_corpus(corpus, half_resolution, config.jobs)]
    elif left is not None and right is not None:
        pair = ImagePair(load_image(left), load_image(right))
        items = [(name, downscale_pair(pair) if half_resolution else pair)]
    else:
        raise UsageError("give --corpus or both --left and --right")
    tile = (tile_h, tile_w) if tile_h and tile_w else None

    target = output_path(out, config, "match")
    target.mkdir(parents=True, exist_ok=True)
    maps: List[Tuple[DisparityMap, DisparityMap]] = ordered_map(
        lambda item: _match_one(item[1], matcher, refine, tile), items, config.jobs
    )
    for (stem, _), (d_l, d_r) in zip(items, maps):
        save_pfm(d_l, disparity_path(target, stem, "left"))
        save_pfm(d_r, disparity_path(target, stem, "right"))
        if png:
            save_disparity_png(d_l, target / f"{stem}_left.png", vmax=matcher.d_max - 1)
        logger.debug("%s: matched with %s", stem, matcher.name)
    console.print(f"matched {len(items)} pair(s) with {matcher.name} into {target}")
