from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, TypeVar

import numpy as np

T = TypeVar("T")
R = TypeVar("R")

# cold-to-warm control points (blue -> cyan -> green -> yellow -> red)
_COLD_TO_WARM = np.array(
    [
        [0.0, 0.0, 0.5],
        [0.0, 0.0, 1.0],
        [0.0, 1.0, 1.0],
        [0.0, 1.0, 0.0],
        [1.0, 1.0, 0.0],
        [1.0, 0.0, 0.0],
        [0.5, 0.0, 0.0],
    ]
)


def derive_seed(seed: int, *index: int) -> int:
    """Stable child seed for (seed, index...), independent of call order."""
    sequence = np.random.SeedSequence([seed & 0xFFFFFFFF, *index])
    return int(sequence.generate_state(1, dtype=np.uint32)[0])


def cold_to_warm(values: np.ndarray, valid: np.ndarray, vmax: float) -> np.ndarray:
    """Map values in [0, vmax] to RGB in [0, 1]; invalid pixels are black."""
    scaled = np.clip(np.where(valid, values, 0.0) / max(vmax, 1e-12), 0.0, 1.0)
    position = scaled * (len(_COLD_TO_WARM) - 1)
    rgb = np.stack(
        [np.interp(position, np.arange(len(_COLD_TO_WARM)), _COLD_TO_WARM[:, c]) for c in range(3)],
        axis=-1,
    )
    rgb[~valid] = 0.0
    return rgb


def ordered_map(func: Callable[[T], R], items: Iterable[T], jobs: int = 1) -> List[R]:
    """Map over items with up to `jobs` threads; results keep input order."""
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [func(item) for item in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(func, items))
