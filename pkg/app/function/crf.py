"""Pixel-graph energy with a fixed contrast-sensitive pairwise term, and its solvers.

E(x) = sum_i cost(i, x_i) + sum_(i,j) f_ij(x_i, x_j) over 4-connected edges, with
f_ij = 0 / p1 / w_ij for jumps of 0 / 1 / more (potts-like) or min(p1 * |jump|, w_ij)
(truncated-linear), and w_ij = max(p1, p2_base * exp(-edge_sensitivity * |I_i - I_j|))
taken on the gray guide image.

Every solver breaks ties towards the smallest disparity.
"""

import itertools
import logging
from typing import Sequence, Tuple

import numpy as np

from ..exceptions import DataError
from ..models import CostVolume, DisparityMap, EnergyBreakdown, Image
from ..schemas import PairwiseModel, Truncation

logger = logging.getLogger(__name__)

DIRECTIONS = ("left", "right", "up", "down")
EXACT_GRID_STATES = 729


def edge_weights(guide: Image, pw: PairwiseModel) -> Tuple[np.ndarray, np.ndarray]:
    """Large-jump weights of horizontal (H, W-1) and vertical (H-1, W) edges."""
    gray = guide.gray()

    def weight(step: np.ndarray) -> np.ndarray:
        return np.maximum(pw.p1, pw.p2_base * np.exp(-pw.edge_sensitivity * np.abs(step)))

    return weight(np.diff(gray, axis=1)), weight(np.diff(gray, axis=0))


def penalty(jump: np.ndarray, weight: np.ndarray, pw: PairwiseModel) -> np.ndarray:
    jump = np.abs(jump)
    if pw.truncation == Truncation.truncated_linear:
        return np.minimum(pw.p1 * jump, weight)
    return np.where(jump == 0, 0.0, np.where(jump == 1, pw.p1, weight))


def _label_matrix(d_max: int) -> np.ndarray:
    labels = np.arange(d_max)
    return labels[:, None] - labels[None, :]


def _integer_labels(labeling: DisparityMap, d_max: int) -> np.ndarray:
    if not labeling.valid.all():
        raise DataError("energy needs a fully valid labeling")
    labels = labeling.disparity
    if not np.array_equal(labels, np.round(labels)):
        raise DataError("energy needs integer labels")
    if labels.min() < 0 or labels.max() >= d_max:
        raise DataError(f"label out of range [0, {d_max})")
    return labels.astype(np.int64)


def energy(cost: CostVolume, pw: PairwiseModel, guide: Image, labeling: DisparityMap) -> EnergyBreakdown:
    if labeling.shape != (cost.height, cost.width) or (guide.height, guide.width) != labeling.shape:
        raise DataError("cost volume, guide and labeling differ in size")
    labels = _integer_labels(labeling, cost.d_max)
    rows, cols = np.indices(labels.shape)
    unary = cost.cost[rows, cols, labels].sum()
    w_h, w_v = edge_weights(guide, pw)
    pairwise = (
        penalty(np.diff(labels, axis=1), w_h, pw).sum()
        + penalty(np.diff(labels, axis=0), w_v, pw).sum()
    )
    return EnergyBreakdown(unary_total=float(unary), pairwise_total=float(pairwise))


def solve_wta(cost: CostVolume) -> DisparityMap:
    return DisparityMap.dense(np.argmin(cost.cost, axis=2).astype(np.float64))


def _scan(cost: np.ndarray, weights: np.ndarray, pw: PairwiseModel) -> np.ndarray:
    """Normalised messages flowing left to right along axis 1.

    cost is (H, W, D); weights (H, W-1) are the edge weights between
    consecutive columns. Returns m (H, W, D) with m[:, 0] = 0 and
    m[:, x, d] = min_d' (L[:, x-1, d'] + f(d', d)) - min_d' L[:, x-1, d'],
    where L = cost + m is the path cost.
    """
    height, width, d_max = cost.shape
    jumps = _label_matrix(d_max)
    messages = np.zeros_like(cost)
    for x in range(1, width):
        previous = cost[:, x - 1] + messages[:, x - 1]
        best = previous.min(axis=1, keepdims=True)
        pen = penalty(jumps[None], weights[:, x - 1, None, None], pw)  # (H, d', d)
        messages[:, x] = (previous[:, :, None] + pen).min(axis=1) - best
    return messages


def aggregate(cost: CostVolume, pw: PairwiseModel, guide: Image, directions: Sequence[str] = DIRECTIONS) -> np.ndarray:
    """Aggregated volume S = cost + sum of incoming messages (unary counted once)."""
    unknown = set(directions) - set(DIRECTIONS)
    if unknown:
        raise DataError(f"unknown scan directions {sorted(unknown)}")
    if (guide.height, guide.width) != (cost.height, cost.width):
        raise DataError("guide image and cost volume differ in size")
    c = cost.cost
    w_h, w_v = edge_weights(guide, pw)
    total = c.copy()
    for direction in DIRECTIONS:
        if direction not in directions:
            continue
        if direction == "left":  # messages arriving from the left neighbour
            total += _scan(c, w_h, pw)
        elif direction == "right":
            total += _scan(c[:, ::-1], w_h[:, ::-1], pw)[:, ::-1]
        elif direction == "up":
            total += _scan(c.transpose(1, 0, 2), w_v.T, pw).transpose(1, 0, 2)
        else:
            flipped = c[::-1].transpose(1, 0, 2)
            total += _scan(flipped, w_v[::-1].T, pw).transpose(1, 0, 2)[::-1]
    return total


def solve_sgm(
    cost: CostVolume, pw: PairwiseModel, guide: Image, directions: Sequence[str] = DIRECTIONS
) -> DisparityMap:
    """Scanline dynamic programming over four directions, argmin of the aggregated costs."""
    return DisparityMap.dense(np.argmin(aggregate(cost, pw, guide, directions), axis=2).astype(np.float64))


def _chain(unary: np.ndarray, weights: np.ndarray, pw: PairwiseModel) -> np.ndarray:
    width, d_max = unary.shape
    jumps = _label_matrix(d_max)
    value = unary[0].copy()
    back = np.zeros((width, d_max), dtype=np.int64)
    for x in range(1, width):
        total = value[:, None] + penalty(jumps, weights[x - 1], pw)  # (d', d)
        back[x] = np.argmin(total, axis=0)
        value = total[back[x], np.arange(d_max)] + unary[x]
    labels = np.zeros(width, dtype=np.int64)
    labels[-1] = int(np.argmin(value))
    for x in range(width - 1, 0, -1):
        labels[x - 1] = back[x, labels[x]]
    return labels


def solve_exact_chain(cost: CostVolume, pw: PairwiseModel, guide: Image) -> DisparityMap:
    """Globally optimal labeling of every row taken as an independent chain (horizontal edges only)."""
    w_h, _ = edge_weights(guide, pw)
    labels = np.stack([_chain(cost.cost[row], w_h[row], pw) for row in range(cost.height)])
    return DisparityMap.dense(labels.astype(np.float64))


def solve_exact_grid(cost: CostVolume, pw: PairwiseModel, guide: Image) -> DisparityMap:
    """Exact minimiser of the full grid energy, by dynamic programming over whole-row labelings.

    Only for tiny problems: the state space has d_max ** width labelings.
    """
    height, width, d_max = cost.cost.shape
    if d_max ** width > EXACT_GRID_STATES:
        raise DataError(f"{d_max}^{width} row states exceed the exact solver limit of {EXACT_GRID_STATES}")
    w_h, w_v = edge_weights(guide, pw)
    states = np.array(list(itertools.product(range(d_max), repeat=width)), dtype=np.int64)  # (S, W)
    columns = np.arange(width)

    def row_energy(row: int) -> np.ndarray:
        unary = cost.cost[row][columns, states].sum(axis=1)
        return unary + penalty(np.diff(states, axis=1), w_h[row], pw).sum(axis=1)

    value = row_energy(0)
    back = []
    for row in range(1, height):
        jumps = states[:, None, :] - states[None, :, :]  # (S_prev, S, W)
        transition = penalty(jumps, w_v[row - 1], pw).sum(axis=2)
        total = value[:, None] + transition
        pointer = np.argmin(total, axis=0)
        back.append(pointer)
        value = total[pointer, np.arange(len(states))] + row_energy(row)
    index = int(np.argmin(value))
    picks = [index]
    for pointer in reversed(back):
        index = int(pointer[index])
        picks.append(index)
    labels = states[picks[::-1]]
    return DisparityMap.dense(labels.astype(np.float64))


def subpixel_refine(cost: CostVolume, labels: DisparityMap) -> DisparityMap:
    """Parabola through the costs at d-1, d, d+1.

    offset = (c[d-1] - c[d+1]) / (2 (c[d-1] - 2 c[d] + c[d+1])), clamped to
    [-0.5, 0.5]; non-convex triples and labels at either end of the range
    keep offset 0. Validity is unchanged.
    """
    d = np.clip(np.round(labels.disparity).astype(np.int64), 0, cost.d_max - 1)
    interior = labels.valid & (d > 0) & (d < cost.d_max - 1)
    rows, cols = np.indices(d.shape)
    c = cost.cost
    below = c[rows, cols, np.maximum(d - 1, 0)]
    centre = c[rows, cols, d]
    above = c[rows, cols, np.minimum(d + 1, cost.d_max - 1)]
    curvature = below - 2.0 * centre + above
    fit = interior & (curvature > 0)
    offset = np.zeros(d.shape)
    offset[fit] = (below[fit] - above[fit]) / (2.0 * curvature[fit])
    refined = np.where(labels.valid, d + np.clip(offset, -0.5, 0.5), labels.disparity)
    return DisparityMap(refined, labels.valid)
