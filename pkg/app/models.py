from dataclasses import dataclass, field
from enum import Enum
from typing import List, Tuple

import numpy as np

from .exceptions import DataError


def _frozen(array: np.ndarray, dtype) -> np.ndarray:
    array = np.array(array, dtype=dtype, copy=True)
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class Image:
    """Row-major raster with intensities in [0, 1], stored as (height, width, channels)."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim == 2:
            data = data[:, :, None]
        if data.ndim != 3 or not 1 <= data.shape[2] <= 4:
            raise DataError(f"image data must be (height, width, 1..4), got {data.shape}")
        if data.size and (not np.all(np.isfinite(data)) or data.min() < 0.0 or data.max() > 1.0):
            raise DataError("image intensities must be finite and within [0, 1]")
        object.__setattr__(self, "data", _frozen(data, np.float64))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    def gray(self) -> np.ndarray:
        return self.data.mean(axis=2)


@dataclass(frozen=True)
class ImagePair:
    left: Image
    right: Image

    def __post_init__(self):
        if self.left.data.shape != self.right.data.shape:
            raise DataError(
                f"stereo views differ in shape: {self.left.data.shape} vs {self.right.data.shape}"
            )

    @property
    def shape(self) -> Tuple[int, int]:
        return self.left.height, self.left.width

    def mirrored(self) -> "ImagePair":
        """Swap and flip the views so the right image becomes the (flipped) reference."""
        return ImagePair(
            left=Image(self.right.data[:, ::-1]),
            right=Image(self.left.data[:, ::-1]),
        )


@dataclass(frozen=True)
class Tile:
    source_id: str
    origin: Tuple[int, int]
    pair: ImagePair

    @property
    def center(self) -> Tuple[float, float]:
        height, width = self.pair.shape
        return self.origin[0] + (height - 1) / 2.0, self.origin[1] + (width - 1) / 2.0


@dataclass(frozen=True)
class DisparityMap:
    """Non-negative disparity magnitudes; `valid` marks pixels carrying a value."""

    disparity: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        disparity = np.asarray(self.disparity, dtype=np.float64)
        valid = np.asarray(self.valid, dtype=bool)
        if disparity.ndim != 2 or valid.shape != disparity.shape:
            raise DataError(f"disparity {disparity.shape} and mask {valid.shape} must be equal 2-D shapes")
        object.__setattr__(self, "disparity", _frozen(disparity, np.float64))
        object.__setattr__(self, "valid", _frozen(valid, bool))

    @classmethod
    def dense(cls, disparity: np.ndarray) -> "DisparityMap":
        disparity = np.asarray(disparity, dtype=np.float64)
        return cls(disparity, np.ones(disparity.shape, dtype=bool))

    @property
    def height(self) -> int:
        return self.disparity.shape[0]

    @property
    def width(self) -> int:
        return self.disparity.shape[1]

    @property
    def shape(self) -> Tuple[int, int]:
        return self.disparity.shape

    def with_valid(self, valid: np.ndarray) -> "DisparityMap":
        return DisparityMap(self.disparity, valid)

    def mirrored(self) -> "DisparityMap":
        return DisparityMap(self.disparity[:, ::-1], self.valid[:, ::-1])


@dataclass(frozen=True)
class CostVolume:
    """Matching costs stored as (height, width, d_max); lower is better."""

    cost: np.ndarray

    def __post_init__(self):
        cost = np.asarray(self.cost, dtype=np.float64)
        if cost.ndim != 3:
            raise DataError(f"cost volume must be 3-D, got {cost.shape}")
        object.__setattr__(self, "cost", _frozen(cost, np.float64))

    @property
    def height(self) -> int:
        return self.cost.shape[0]

    @property
    def width(self) -> int:
        return self.cost.shape[1]

    @property
    def d_max(self) -> int:
        return self.cost.shape[2]


@dataclass(frozen=True)
class FeatureMap:
    """Per-pixel features stored as (dim, height, width)."""

    data: np.ndarray

    @property
    def dim(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]


class Activation(str, Enum):
    none = "none"
    tanh = "tanh"


@dataclass
class ConvLayer:
    kernel: np.ndarray
    bias: np.ndarray
    activation: Activation = Activation.tanh

    def __post_init__(self):
        if self.kernel.ndim != 4 or self.kernel.shape[2] != self.kernel.shape[3] or self.kernel.shape[2] % 2 == 0:
            raise DataError(f"kernel must be (out, in, k, k) with odd k, got {self.kernel.shape}")
        if self.bias.shape != (self.kernel.shape[0],):
            raise DataError(f"bias shape {self.bias.shape} does not match {self.kernel.shape[0]} outputs")
        self.activation = Activation(self.activation)

    @property
    def out_channels(self) -> int:
        return self.kernel.shape[0]

    @property
    def in_channels(self) -> int:
        return self.kernel.shape[1]

    @property
    def size(self) -> int:
        return self.kernel.shape[2]


@dataclass
class UnaryModel:
    layers: List[ConvLayer]
    d_max: int

    def __post_init__(self):
        for previous, layer in zip(self.layers, self.layers[1:]):
            if previous.out_channels != layer.in_channels:
                raise DataError("consecutive layers disagree on channel count")

    @property
    def in_channels(self) -> int:
        return self.layers[0].in_channels

    @property
    def receptive_field(self) -> int:
        return 1 + sum(layer.size - 1 for layer in self.layers)

    def parameters(self) -> List[np.ndarray]:
        return [array for layer in self.layers for array in (layer.kernel, layer.bias)]

    def copy(self) -> "UnaryModel":
        return UnaryModel(
            layers=[ConvLayer(layer.kernel.copy(), layer.bias.copy(), layer.activation) for layer in self.layers],
            d_max=self.d_max,
        )


@dataclass(frozen=True)
class SyntheticScene:
    pair: ImagePair
    gt_disparity_left: DisparityMap
    gt_disparity_right: DisparityMap
    occlusion_left: np.ndarray
    occlusion_right: np.ndarray
    rng_seed: int


@dataclass(frozen=True)
class TrainingSample:
    pair: ImagePair
    pseudo_gt: DisparityMap
    source_id: str = ""

    def __post_init__(self):
        if self.pseudo_gt.shape != self.pair.shape:
            raise DataError("pseudo labels and images differ in size")
        if not self.pseudo_gt.valid.any():
            raise DataError(f"training sample {self.source_id!r} has no valid label")


@dataclass(frozen=True)
class EnergyBreakdown:
    unary_total: float
    pairwise_total: float
    total: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "total", self.unary_total + self.pairwise_total)


@dataclass(frozen=True)
class DepthMap:
    """Metric depth in meters; `valid` excludes pixels without a positive disparity."""

    depth: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "depth", _frozen(self.depth, np.float64))
        object.__setattr__(self, "valid", _frozen(self.valid, bool))
