"""Cost volume -> solver -> disparity, for either reference view.

The right-reference map is computed by mirroring: both views are flipped
horizontally and swapped, matched as a left-reference pair, and the result is
flipped back.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

from ..exceptions import DataError
from ..models import CostVolume, DisparityMap, ImagePair, UnaryModel
from ..schemas import ConsistencyConfig, PairwiseModel, Solver
from .consistency import lr_check
from .crf import solve_sgm, solve_wta, subpixel_refine
from .imaging import stitch_disparity, tile_pair
from .unary_model import census_cost_volume, model_cost_volume

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Matcher:
    """A learned model, or the census baseline when `model` is None."""

    pairwise: PairwiseModel
    d_max: int
    solver: Solver = Solver.sgm
    model: Optional[UnaryModel] = None
    census_window: int = 5

    @property
    def name(self) -> str:
        return f"{'census' if self.model is None else 'model'}-{self.solver.value}"


def cost_volume(pair: ImagePair, matcher: Matcher) -> CostVolume:
    if matcher.model is None:
        return census_cost_volume(pair, matcher.census_window, matcher.d_max)
    if matcher.model.d_max != matcher.d_max:
        raise DataError(f"model d_max {matcher.model.d_max} differs from configured d_max {matcher.d_max}")
    return model_cost_volume(pair, matcher.model)


def disparity(pair: ImagePair, matcher: Matcher) -> Tuple[DisparityMap, CostVolume]:
    """Integer labels for the left view and the cost volume they were solved on."""
    cost = cost_volume(pair, matcher)
    if matcher.solver == Solver.wta:
        return solve_wta(cost), cost
    return solve_sgm(cost, matcher.pairwise, pair.left), cost


def disparity_pair(pair: ImagePair, matcher: Matcher) -> Tuple[DisparityMap, DisparityMap, CostVolume]:
    """(d_l, d_r, left cost volume), both maps as non-negative magnitudes."""
    d_l, cost_l = disparity(pair, matcher)
    d_r, _ = disparity(pair.mirrored(), matcher)
    return d_l, d_r.mirrored(), cost_l


def predict(pair: ImagePair, matcher: Matcher, cfg: ConsistencyConfig) -> DisparityMap:
    """Consistency-filtered, subpixel-refined left disparity."""
    d_l, d_r, cost = disparity_pair(pair, matcher)
    return subpixel_refine(cost, lr_check(d_l, d_r, cfg))


def disparity_tiled(pair: ImagePair, matcher: Matcher, tile_h: int, tile_w: int) -> DisparityMap:
    """Left labels computed tile by tile and stitched back together.

    Tiles overlap by 2 * d_max, so the nearest-centre handover lies at least
    d_max columns inside every tile and each kept pixel has its full match
    range within its own tile.
    """
    tiles = tile_pair(pair, tile_h, tile_w, overlap=2 * matcher.d_max, d_max=matcher.d_max)
    maps = [disparity(tile.pair, matcher)[0] for tile in tiles]
    logger.debug("matched %d tiles of %dx%d", len(tiles), tile_h, tile_w)
    height, width = pair.shape
    return stitch_disparity(tiles, maps, height, width)
