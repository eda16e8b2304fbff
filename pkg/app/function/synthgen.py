"""Synthetic rectified stereo scenes with exact integer ground truth.

A scene is a stack of layers: a ground plane spanning the whole view plus
axis-aligned rectangles. Each layer has an integer disparity per image row
(fronto-parallel layers are constant, slanted ones vary linearly with the row
before rounding) and its own texture, indexed by left-image column. Both views
are rendered with a z-buffer on disparity, so a pixel is visible in the other
view exactly when the same layer wins the z-buffer at the corresponding column.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional

import numpy as np

from ..models import DisparityMap, Image, ImagePair, SyntheticScene
from ..schemas import CorpusSpec, DomainShift, TextureStyle
from ..store import save_corpus
from ..tools import derive_seed, ordered_map

logger = logging.getLogger(__name__)

NOISE_BOOST = 3.0


@dataclass
class _Layer:
    disparity: np.ndarray  # (height,) integer disparity per row
    support: np.ndarray  # (height, columns) bool, in left-image columns
    texture: np.ndarray  # (height, columns, channels)


def _smooth(noise: np.ndarray, sigma: float) -> np.ndarray:
    radius = int(3 * sigma)
    taps = np.exp(-0.5 * (np.arange(-radius, radius + 1) / sigma) ** 2)
    taps /= taps.sum()
    for axis in (0, 1):
        noise = np.apply_along_axis(lambda line: np.convolve(line, taps, mode="same"), axis, noise)
    return noise


def _texture(rng: np.random.Generator, height: int, width: int, spec: CorpusSpec) -> np.ndarray:
    if spec.texture_style == TextureStyle.random_dot:
        base = rng.random((height, width))
    elif spec.texture_style == TextureStyle.blocks:
        coarse = rng.random((height // 4 + 1, width // 4 + 1))
        base = np.repeat(np.repeat(coarse, 4, axis=0), 4, axis=1)[:height, :width]
    else:
        base = _smooth(rng.random((height, width)), sigma=1.5)
        base = (base - base.min()) / max(base.max() - base.min(), 1e-12)
    if spec.channels == 1:
        return base[:, :, None]
    gains = rng.uniform(0.6, 1.0, spec.channels)
    offsets = rng.uniform(0.0, 0.2, spec.channels)
    jitter = rng.normal(0.0, 0.05, (height, width, spec.channels))
    return np.clip(base[:, :, None] * gains + offsets + jitter, 0.0, 1.0)


def _row_disparity(rng: np.random.Generator, rows: np.ndarray, low: int, high: int, slanted: bool) -> np.ndarray:
    if not slanted or low == high:
        return np.full(rows.shape, rng.integers(low, high + 1))
    top, bottom = rng.uniform(low, high, 2)
    ramp = top + (bottom - top) * (rows - rows[0]) / max(rows[-1] - rows[0], 1)
    return np.clip(np.rint(ramp), low, high).astype(np.int64)


def _layers(rng: np.random.Generator, spec: CorpusSpec) -> List[_Layer]:
    height, width = spec.height, spec.width
    columns = width + spec.d_max
    rows = np.arange(height)
    low, high = spec.ground_bounds
    ground = _Layer(
        disparity=_row_disparity(rng, rows, low, high, slanted=True),
        support=np.ones((height, columns), dtype=bool),
        texture=_texture(rng, height, columns, spec),
    )
    layers = [ground]
    low, high = spec.rect_bounds
    for _ in range(spec.n_rectangles):
        rect_h = int(rng.integers(max(2, height // 6), max(3, height // 2) + 1))
        rect_w = int(rng.integers(max(2, width // 8), max(3, width // 3) + 1))
        top = int(rng.integers(0, max(1, height - rect_h + 1)))
        left = int(rng.integers(0, max(1, width - rect_w + 1)))
        slanted = bool(rng.random() < spec.slanted_fraction)
        disparity = _row_disparity(rng, rows, low, high, slanted)
        support = np.zeros((height, columns), dtype=bool)
        support[top:top + rect_h, left:left + rect_w] = True
        layers.append(_Layer(disparity, support, _texture(rng, height, columns, spec)))
    return layers


def _render(layers: List[_Layer], height: int, width: int, channels: int):
    """Z-buffer both views; returns images, per-pixel disparity and winning layer ids."""
    rows = np.arange(height)[:, None]
    cols = np.arange(width)[None, :]
    depth_l = np.full((height, width), -1)
    depth_r = np.full((height, width), -1)
    owner_l = np.zeros((height, width), dtype=np.int64)
    owner_r = np.zeros((height, width), dtype=np.int64)
    left = np.zeros((height, width, channels))
    right = np.zeros((height, width, channels))
    for index, layer in enumerate(layers):
        d = layer.disparity[:, None]
        # left view: layer column x seen at x
        covered = layer.support[:, :width]
        wins = covered & (d > depth_l)
        depth_l = np.where(wins, d, depth_l)
        owner_l = np.where(wins, index, owner_l)
        left = np.where(wins[:, :, None], layer.texture[:, :width], left)
        # right view: layer column x + d seen at x
        source = cols + d
        covered = layer.support[rows, source]
        wins = covered & (d > depth_r)
        depth_r = np.where(wins, d, depth_r)
        owner_r = np.where(wins, index, owner_r)
        right = np.where(wins[:, :, None], layer.texture[rows, source], right)
    return left, right, depth_l, depth_r, owner_l, owner_r


def _apply_shift(image: np.ndarray, shift: DomainShift) -> np.ndarray:
    if shift == DomainShift.channel_swap:
        return image[:, :, ::-1] if image.shape[2] > 1 else 1.0 - image
    if shift == DomainShift.contrast_shift:
        return 0.25 + 0.5 * image
    return image


def generate_scene(spec: CorpusSpec, seed: int) -> SyntheticScene:
    """Deterministic scene for (spec, seed)."""
    rng = np.random.default_rng(seed)
    height, width = spec.height, spec.width
    layers = _layers(rng, spec)
    left, right, depth_l, depth_r, owner_l, owner_r = _render(layers, height, width, spec.channels)

    rows = np.arange(height)[:, None]
    cols = np.arange(width)[None, :]
    match_r = cols - depth_l
    inside = match_r >= 0
    visible_l = inside & (owner_r[rows, np.clip(match_r, 0, width - 1)] == owner_l)
    match_l = cols + depth_r
    inside = match_l < width
    visible_r = inside & (owner_l[rows, np.clip(match_l, 0, width - 1)] == owner_r)

    sigma = spec.noise_sigma * (NOISE_BOOST if spec.domain_shift == DomainShift.noise_boost else 1.0)
    views = []
    for view in (left, right):
        view = _apply_shift(view, spec.domain_shift)
        if sigma > 0:
            view = view + rng.normal(0.0, sigma, view.shape)
        views.append(np.clip(view, 0.0, 1.0))

    return SyntheticScene(
        pair=ImagePair(Image(views[0]), Image(views[1])),
        gt_disparity_left=DisparityMap(depth_l.astype(np.float64), visible_l),
        gt_disparity_right=DisparityMap(depth_r.astype(np.float64), visible_r),
        occlusion_left=~visible_l,
        occlusion_right=~visible_r,
        rng_seed=seed,
    )


def generate_corpus(
    spec: CorpusSpec, seed: int, out_dir: Optional[Path] = None, jobs: int = 1
) -> List[SyntheticScene]:
    """`spec.n_pairs` scenes seeded from (seed, index); written with a manifest if `out_dir` is set."""
    seeds = [derive_seed(seed, index) for index in range(spec.n_pairs)]
    scenes = ordered_map(lambda s: generate_scene(spec, s), seeds, jobs)
    logger.info("generated %d synthetic scenes (%dx%d, d_max %d)", len(scenes), spec.width, spec.height, spec.d_max)
    if out_dir is not None:
        save_corpus(scenes, spec, out_dir)
    return scenes
