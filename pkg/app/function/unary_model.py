"""Learned data term: convolutional features, correlation cost volume, backprop.

Convolutions are same-size with zero padding and run as im2col matrix
products. All arithmetic is float64; parameters keep their own dtype
(float32 for models built here or loaded from a checkpoint).

Cost volumes hold cost(y, x, d) = -<f_l(y, x), f_r(y, x - d)>. Entries whose
match column x - d leaves the image take the worst in-bounds cost of the same
pixel; the backward pass routes their adjoint to that entry.

Checkpoint layout (little-endian)::

    b"SSUM"  u32 version  u32 d_max  u32 n_layers
    n_layers x (u32 out_ch, u32 in_ch, u32 k, u32 activation)   # 0 none, 1 tanh
    n_layers x (float32 kernel[out_ch, in_ch, k, k], float32 bias[out_ch])
"""

import logging
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..exceptions import DataError, NumericalError
from ..models import Activation, ConvLayer, CostVolume, FeatureMap, Image, ImagePair, UnaryModel
from ..schemas import NetworkSpec

logger = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"SSUM"
CHECKPOINT_VERSION = 1
_ACTIVATION_CODES = {Activation.none: 0, Activation.tanh: 1}


def init_model(spec: NetworkSpec, seed: int) -> UnaryModel:
    """Random float32 model: tanh on every layer but the last."""
    rng = np.random.default_rng(seed)
    layers = []
    in_channels = spec.in_channels
    for index in range(spec.layers):
        fan_in = in_channels * spec.kernel * spec.kernel
        kernel = rng.normal(0.0, 1.0 / np.sqrt(fan_in), (spec.channels, in_channels, spec.kernel, spec.kernel))
        last = index == spec.layers - 1
        layers.append(
            ConvLayer(
                kernel=kernel.astype(np.float32),
                bias=np.zeros(spec.channels, dtype=np.float32),
                activation=Activation.none if last else Activation.tanh,
            )
        )
        in_channels = spec.channels
    return UnaryModel(layers=layers, d_max=spec.d_max)


def _im2col(x: np.ndarray, k: int) -> np.ndarray:
    channels, height, width = x.shape
    p = k // 2
    padded = np.pad(x, ((0, 0), (p, p), (p, p)))
    windows = sliding_window_view(padded, (k, k), axis=(1, 2))  # (C, H, W, k, k)
    return windows.transpose(0, 3, 4, 1, 2).reshape(channels * k * k, height * width)


def _col2im(cols: np.ndarray, channels: int, k: int, height: int, width: int) -> np.ndarray:
    p = k // 2
    cols = cols.reshape(channels, k, k, height, width)
    padded = np.zeros((channels, height + 2 * p, width + 2 * p))
    for i in range(k):
        for j in range(k):
            padded[:, i:i + height, j:j + width] += cols[:, i, j]
    return padded[:, p:p + height, p:p + width]


def _forward(x: np.ndarray, model: UnaryModel):
    caches = []
    for layer in model.layers:
        _, height, width = x.shape
        cols = _im2col(x, layer.size)
        weights = layer.kernel.astype(np.float64).reshape(layer.out_channels, -1)
        out = weights @ cols + layer.bias.astype(np.float64)[:, None]
        if layer.activation == Activation.tanh:
            out = np.tanh(out)
        out = out.reshape(layer.out_channels, height, width)
        caches.append((cols, out))
        x = out
    if not np.all(np.isfinite(x)):
        raise NumericalError("non-finite feature values")
    return x, caches


def _backward(grad: np.ndarray, model: UnaryModel, caches) -> List[np.ndarray]:
    grads: List[np.ndarray] = []
    for layer, (cols, out) in zip(reversed(model.layers), reversed(caches)):
        _, height, width = out.shape
        if layer.activation == Activation.tanh:
            grad = grad * (1.0 - out * out)
        flat = grad.reshape(layer.out_channels, -1)
        grads.append(flat.sum(axis=1))
        grads.append((flat @ cols.T).reshape(layer.kernel.shape))
        weights = layer.kernel.astype(np.float64).reshape(layer.out_channels, -1)
        grad = _col2im(weights.T @ flat, layer.in_channels, layer.size, height, width)
    grads.reverse()  # -> kernel0, bias0, kernel1, bias1, ...
    return grads


def _as_input(image: Image, model: UnaryModel) -> np.ndarray:
    if image.channels != model.in_channels:
        raise DataError(f"channel mismatch: model expects {model.in_channels}, image has {image.channels}")
    return image.data.transpose(2, 0, 1)


def extract_features(image: Image, model: UnaryModel) -> FeatureMap:
    features, _ = _forward(_as_input(image, model), model)
    return FeatureMap(features)


def _in_bounds(width: int, d_max: int) -> np.ndarray:
    return np.arange(width)[:, None] >= np.arange(d_max)[None, :]


def _fill_out_of_bounds(cost: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    inside = _in_bounds(cost.shape[1], cost.shape[2])
    masked = np.where(inside, cost, -np.inf)
    worst = masked.argmax(axis=2)
    filled = np.where(inside, cost, np.take_along_axis(cost, worst[:, :, None], axis=2))
    return filled, inside, worst


def _correlate(feat_l: np.ndarray, feat_r: np.ndarray, d_max: int) -> np.ndarray:
    _, height, width = feat_l.shape
    cost = np.zeros((height, width, d_max))
    for d in range(d_max):
        cost[:, d:, d] = -(feat_l[:, :, d:] * feat_r[:, :, :width - d]).sum(axis=0)
    return cost


def build_cost_volume(feat_l: FeatureMap, feat_r: FeatureMap, d_max: int) -> CostVolume:
    if feat_l.data.shape != feat_r.data.shape:
        raise DataError(f"feature maps differ in shape: {feat_l.data.shape} vs {feat_r.data.shape}")
    if d_max > feat_l.width:
        raise DataError(f"d_max {d_max} exceeds image width {feat_l.width}")
    cost, _, _ = _fill_out_of_bounds(_correlate(feat_l.data, feat_r.data, d_max))
    return CostVolume(cost)


def model_cost_volume(pair: ImagePair, model: UnaryModel) -> CostVolume:
    feat_l = extract_features(pair.left, model)
    feat_r = extract_features(pair.right, model)
    return build_cost_volume(feat_l, feat_r, model.d_max)


@dataclass
class CostTape:
    """Forward-pass state kept for the backward pass of one pair."""

    feat_l: np.ndarray
    feat_r: np.ndarray
    caches_l: list
    caches_r: list
    inside: np.ndarray
    worst: np.ndarray


def cost_forward(pair: ImagePair, model: UnaryModel) -> Tuple[CostVolume, CostTape]:
    feat_l, caches_l = _forward(_as_input(pair.left, model), model)
    feat_r, caches_r = _forward(_as_input(pair.right, model), model)
    if model.d_max > feat_l.shape[2]:
        raise DataError(f"d_max {model.d_max} exceeds image width {feat_l.shape[2]}")
    cost, inside, worst = _fill_out_of_bounds(_correlate(feat_l, feat_r, model.d_max))
    return CostVolume(cost), CostTape(feat_l, feat_r, caches_l, caches_r, inside, worst)


def cost_backward(tape: CostTape, model: UnaryModel, grad_cost: Union[CostVolume, np.ndarray]) -> List[np.ndarray]:
    """d(sum(grad_cost * cost))/d(parameters), in `model.parameters()` order."""
    adjoint = grad_cost.cost if isinstance(grad_cost, CostVolume) else np.asarray(grad_cost, dtype=np.float64)
    if not np.all(np.isfinite(adjoint)):
        raise NumericalError("non-finite cost adjoint")
    expected = tape.worst.shape + (model.d_max,)
    if adjoint.shape != expected:
        raise DataError(f"adjoint shape {adjoint.shape} does not match cost volume {expected}")

    routed = np.where(tape.inside, adjoint, 0.0)
    spill = np.where(tape.inside, 0.0, adjoint).sum(axis=2)
    rows, cols = np.indices(tape.worst.shape)
    routed[rows, cols, tape.worst] += spill

    feat_l, feat_r = tape.feat_l, tape.feat_r
    width = feat_l.shape[2]
    grad_l = np.zeros_like(feat_l)
    grad_r = np.zeros_like(feat_r)
    for d in range(model.d_max):
        g = -routed[:, d:, d]
        grad_l[:, :, d:] += g * feat_r[:, :, :width - d]
        grad_r[:, :, :width - d] += g * feat_l[:, :, d:]

    grads = [
        gl + gr
        for gl, gr in zip(_backward(grad_l, model, tape.caches_l), _backward(grad_r, model, tape.caches_r))
    ]
    if not all(np.all(np.isfinite(g)) for g in grads):
        raise NumericalError("non-finite parameter gradient")
    return grads


def forward_backward(
    pair: ImagePair, model: UnaryModel, grad_cost: Union[CostVolume, np.ndarray]
) -> Tuple[CostVolume, List[np.ndarray]]:
    """Cost volume and d(sum(grad_cost * cost))/d(parameters), in `model.parameters()` order."""
    cost, tape = cost_forward(pair, model)
    return cost, cost_backward(tape, model, grad_cost)


def census_transform(gray: np.ndarray, window: int) -> np.ndarray:
    """(H, W, window**2 - 1) bits: neighbour darker than the centre (edge-replicated borders)."""
    r = window // 2
    height, width = gray.shape
    padded = np.pad(gray, r, mode="edge")
    bits = [
        padded[r + dy:r + dy + height, r + dx:r + dx + width] < gray
        for dy in range(-r, r + 1)
        for dx in range(-r, r + 1)
        if dy or dx
    ]
    return np.stack(bits, axis=2)


def census_cost_volume(pair: ImagePair, window: int, d_max: int) -> CostVolume:
    """Hamming distance between census strings of left x and right x - d."""
    height, width = pair.shape
    if window % 2 == 0:
        raise DataError(f"census window must be odd, got {window}")
    if window > min(height, width):
        raise DataError(f"census window {window} larger than image {height}x{width}")
    if d_max > width:
        raise DataError(f"d_max {d_max} exceeds image width {width}")
    bits_l = census_transform(pair.left.gray(), window)
    bits_r = census_transform(pair.right.gray(), window)
    cost = np.zeros((height, width, d_max))
    for d in range(d_max):
        cost[:, d:, d] = (bits_l[:, d:] != bits_r[:, :width - d]).sum(axis=2)
    filled, _, _ = _fill_out_of_bounds(cost)
    return CostVolume(filled)


def save_checkpoint(model: UnaryModel, path: Path) -> None:
    header = [CHECKPOINT_MAGIC, struct.pack("<III", CHECKPOINT_VERSION, model.d_max, len(model.layers))]
    body = []
    for layer in model.layers:
        header.append(
            struct.pack("<IIII", layer.out_channels, layer.in_channels, layer.size, _ACTIVATION_CODES[layer.activation])
        )
        body.append(np.ascontiguousarray(layer.kernel, dtype="<f4").tobytes())
        body.append(np.ascontiguousarray(layer.bias, dtype="<f4").tobytes())
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(b"".join(header + body))
    logger.debug("saved checkpoint %s", path)


def load_checkpoint(path: Path, expected: Optional[NetworkSpec] = None) -> UnaryModel:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise DataError(f"unreadable checkpoint {path}: {exc}") from exc
    if raw[:4] != CHECKPOINT_MAGIC or len(raw) < 16:
        raise DataError(f"checkpoint version mismatch: {path} is not a model checkpoint")
    version, d_max, n_layers = struct.unpack_from("<III", raw, 4)
    if version != CHECKPOINT_VERSION:
        raise DataError(f"checkpoint version mismatch: {path} has version {version}, expected {CHECKPOINT_VERSION}")
    offset = 16
    codes = {code: name for name, code in _ACTIVATION_CODES.items()}
    shapes = []
    try:
        for _ in range(n_layers):
            out_ch, in_ch, k, code = struct.unpack_from("<IIII", raw, offset)
            shapes.append((out_ch, in_ch, k, codes[code]))
            offset += 16
        layers = []
        for out_ch, in_ch, k, activation in shapes:
            kernel = np.frombuffer(raw, dtype="<f4", count=out_ch * in_ch * k * k, offset=offset)
            offset += kernel.nbytes
            bias = np.frombuffer(raw, dtype="<f4", count=out_ch, offset=offset)
            offset += bias.nbytes
            layers.append(
                ConvLayer(kernel.reshape(out_ch, in_ch, k, k).astype(np.float32), bias.astype(np.float32), activation)
            )
    except (struct.error, KeyError, ValueError) as exc:
        raise DataError(f"corrupt checkpoint {path}: {exc}") from exc
    if offset != len(raw):
        raise DataError(f"corrupt checkpoint {path}: {len(raw) - offset} trailing bytes")
    model = UnaryModel(layers=layers, d_max=d_max)
    if expected is not None:
        found = (model.in_channels, layers[0].out_channels, len(layers), layers[0].size, d_max)
        wanted = (expected.in_channels, expected.channels, expected.layers, expected.kernel, expected.d_max)
        if found != wanted:
            raise DataError(f"model/architecture mismatch: checkpoint {found}, configured {wanted}")
    return model
