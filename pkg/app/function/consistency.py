"""Left-right consistency filtering.

Both maps hold non-negative disparity magnitudes: left pixel x matches right
pixel x - d_l(x), right pixel x' matches left pixel x' + d_r(x'). A left pixel
survives when its match column (rounded to nearest) lies inside the image, the
right map is valid there and |d_l(x) - d_r(x - d_l(x))| < epsilon.
"""

import logging
from typing import Tuple

import numpy as np

from ..exceptions import DataError
from ..models import DisparityMap
from ..schemas import ConsistencyConfig

logger = logging.getLogger(__name__)


def lr_check(d_l: DisparityMap, d_r: DisparityMap, cfg: ConsistencyConfig = ConsistencyConfig()) -> DisparityMap:
    if d_l.shape != d_r.shape:
        raise DataError(f"left and right disparity maps differ in size: {d_l.shape} vs {d_r.shape}")
    height, width = d_l.shape
    cols = np.arange(width)[None, :]
    match = np.floor(cols - d_l.disparity + 0.5).astype(np.int64)
    inside = (match >= 0) & (match < width)
    lookup = np.clip(match, 0, width - 1)
    rows = np.arange(height)[:, None]
    other = d_r.disparity[rows, lookup]
    valid = d_l.valid & inside & d_r.valid[rows, lookup] & (np.abs(d_l.disparity - other) < cfg.epsilon)
    return d_l.with_valid(valid)


def survivor_stats(filtered: DisparityMap) -> Tuple[float, int]:
    """(valid fraction, valid count); an empty map has fraction 0."""
    count = int(filtered.valid.sum())
    total = filtered.valid.size
    return (count / total if total else 0.0), count
