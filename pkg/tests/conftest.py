import numpy as np
import pytest

from app.function.synthgen import generate_scene
from app.models import Activation, ConvLayer, Image, ImagePair, UnaryModel
from app.schemas import CorpusSpec, NetworkSpec


def flat_spec(**overrides) -> CorpusSpec:
    """Noise-free ground plane at a constant disparity, no rectangles."""
    values = dict(
        n_pairs=1,
        width=48,
        height=16,
        d_max=8,
        noise_sigma=0.0,
        n_rectangles=0,
        ground_range=(3, 3),
        slanted_fraction=0.0,
    )
    values.update(overrides)
    return CorpusSpec(**values)


def small_spec(**overrides) -> CorpusSpec:
    values = dict(n_pairs=3, width=48, height=24, d_max=8, noise_sigma=0.01, n_rectangles=2)
    values.update(overrides)
    return CorpusSpec(**values)


def random_model(rng: np.random.Generator, layers: int, channels: int, kernel: int, d_max: int, in_channels=1):
    """float64 model with tanh between layers, for finite-difference checks."""
    stack = []
    fan_in = in_channels
    for index in range(layers):
        stack.append(
            ConvLayer(
                kernel=rng.normal(0.0, 0.5, (channels, fan_in, kernel, kernel)),
                bias=rng.normal(0.0, 0.1, channels),
                activation=Activation.none if index == layers - 1 else Activation.tanh,
            )
        )
        fan_in = channels
    return UnaryModel(layers=stack, d_max=d_max)


def random_pair(rng: np.random.Generator, height: int, width: int, channels: int = 1) -> ImagePair:
    return ImagePair(
        Image(rng.random((height, width, channels))),
        Image(rng.random((height, width, channels))),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def flat_scene():
    return generate_scene(flat_spec(), seed=5)


@pytest.fixture
def tiny_network():
    return NetworkSpec(in_channels=1, channels=4, layers=2, kernel=3, d_max=8)
