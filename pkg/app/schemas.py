from enum import Enum
from typing import Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class TextureStyle(str, Enum):
    random_dot = "random-dot"
    smooth_noise = "smooth-noise"
    blocks = "blocks"


class DomainShift(str, Enum):
    none = "none"
    channel_swap = "channel-swap"
    noise_boost = "noise-boost"
    contrast_shift = "contrast-shift"


class Truncation(str, Enum):
    potts = "potts-like"
    truncated_linear = "truncated-linear"


class Solver(str, Enum):
    sgm = "sgm"
    wta = "wta"


class OptimizerKind(str, Enum):
    sgd = "sgd"
    adam = "adam"


class CorpusSpec(BaseModel):
    """Parameters of a synthetic stereo corpus.

    Disparity ranges are inclusive integer ranges. `rect_range=None` puts
    rectangles strictly in front of the ground plane, up to `d_max - 1`.
    """

    model_config = ConfigDict(frozen=True)

    n_pairs: int = Field(20, ge=0)
    width: int = Field(256, ge=4)
    height: int = Field(128, ge=2)
    d_max: int = Field(32, ge=2)
    channels: int = Field(1, ge=1, le=4)
    noise_sigma: float = Field(0.04, ge=0)
    texture_style: TextureStyle = TextureStyle.random_dot
    domain_shift: DomainShift = DomainShift.none
    n_rectangles: int = Field(4, ge=0)
    slanted_fraction: float = Field(0.5, ge=0, le=1)
    ground_range: Optional[Tuple[int, int]] = None
    rect_range: Optional[Tuple[int, int]] = None

    @property
    def ground_bounds(self) -> Tuple[int, int]:
        return self.ground_range if self.ground_range is not None else (0, self.d_max // 4)

    @property
    def rect_bounds(self) -> Tuple[int, int]:
        if self.rect_range is not None:
            return self.rect_range
        return (self.ground_bounds[1] + 1, self.d_max - 1)

    @model_validator(mode="after")
    def check_ranges(self):
        if self.d_max >= self.width:
            raise ValueError(f"d_max ({self.d_max}) must be smaller than width ({self.width})")
        ranges = [self.ground_bounds] + ([self.rect_bounds] if self.n_rectangles else [])
        for low, high in ranges:
            if not 0 <= low <= high < self.d_max:
                raise ValueError(f"disparity range ({low}, {high}) outside [0, {self.d_max})")
        return self


class ConsistencyConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    epsilon: float = Field(0.9, gt=0)


class PairwiseModel(BaseModel):
    """Fixed pairwise term: penalty 0 / p1 / w_ij for label jumps 0 / 1 / larger.

    w_ij = max(p1, p2_base * exp(-edge_sensitivity * |I_i - I_j|)). With the
    truncated-linear form the penalty is min(p1 * |jump|, w_ij).
    """

    model_config = ConfigDict(frozen=True)

    p1: float = Field(0.4, ge=0)
    p2_base: float = Field(2.0, ge=0)
    edge_sensitivity: float = Field(10.0, ge=0)
    truncation: Truncation = Truncation.potts

    @model_validator(mode="after")
    def check_order(self):
        if self.p1 > self.p2_base:
            raise ValueError("p1 must not exceed p2_base")
        return self


class NetworkSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    in_channels: int = Field(1, ge=1, le=4)
    channels: int = Field(16, ge=1)
    layers: int = Field(3, ge=1)
    kernel: int = Field(3, ge=1)
    d_max: int = Field(32, ge=2)

    @field_validator("kernel")
    @classmethod
    def odd_kernel(cls, value: int) -> int:
        if value % 2 == 0:
            raise ValueError("kernel size must be odd")
        return value


class TrainConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    learning_rate: float = Field(0.002, ge=0)
    optimizer: OptimizerKind = OptimizerKind.adam
    beta1: float = Field(0.9, ge=0, lt=1)
    beta2: float = Field(0.999, ge=0, lt=1)
    eps_opt: float = Field(1e-8, gt=0)
    epochs: int = Field(4, ge=1)
    batch: int = Field(2, ge=1)
    seed: int = 0
    softmax_temperature: float = Field(1.0, gt=0)
    tile_h: Optional[int] = Field(None, ge=4)
    tile_w: Optional[int] = Field(None, ge=4)


class SelfTrainConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    iterations: int = Field(2, ge=1)
    train: TrainConfig = TrainConfig(epochs=8)
    filter: ConsistencyConfig = ConsistencyConfig()
    solver: Solver = Solver.sgm
    use_filter: bool = True
    half_resolution: bool = False


class CameraGeometry(BaseModel):
    model_config = ConfigDict(frozen=True)

    focal_length: float = Field(1000.0, gt=0)
    baseline: float = Field(0.6, gt=0)


class EvalConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    thresholds: List[float] = [0.5, 1.0, 2.0]
    metric_thresholds: List[float] = [0.3, 0.5, 1.0]
    reference_fraction: float = Field(1.0, gt=0, le=1)
    reference_seed: int = 0

    @field_validator("thresholds", "metric_thresholds")
    @classmethod
    def ascending(cls, value: List[float]) -> List[float]:
        if any(t <= 0 for t in value) or list(value) != sorted(value):
            raise ValueError("thresholds must be positive and sorted ascending")
        return value


class EvalReport(BaseModel):
    recall: float = Field(ge=0, le=1)
    accuracy: Dict[float, float]
    n_reference: int
    n_predicted: int
    n_intersection: int
    mean_abs_error: float
    metric_accuracy: Optional[Dict[float, float]] = None


class ModelRow(BaseModel):
    name: str
    report: EvalReport
