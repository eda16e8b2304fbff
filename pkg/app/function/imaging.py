"""Raster I/O, half-resolution processing and tiling.

Images are decoded by Pillow (PNG, binary and plain PGM/PPM) and normalised
to [0, 1] by the full scale of the decoded mode; Pillow rescales netpbm files
whose maxval is neither 255 nor 65535 to that scale. Saving quantises to 8
bits unless `bit_depth=16` is requested (PNG: single channel only). Plain
(ASCII) netpbm output is written here since Pillow only writes binary netpbm.

Disparity maps use the PFM convention: header ``Pf``, ``width height``, a
negative scale for little-endian float32, rows stored bottom-up. Invalid
pixels are written as +infinity and read back as invalid.
"""

import logging
import math
from pathlib import Path
from typing import List, Sequence

import numpy as np
from PIL import Image as PILImage
from PIL import UnidentifiedImageError

from ..exceptions import DataError
from ..models import DisparityMap, Image, ImagePair, Tile
from ..tools import cold_to_warm

logger = logging.getLogger(__name__)

MAX_SAMPLES = 1 << 28

_FORMATS = ("PNG", "PPM")
_EIGHT_BIT_MODES = ("L", "LA", "RGB", "RGBA")
_SIXTEEN_BIT_MODES = ("I", "I;16", "I;16B", "I;16L")


def _decode(img: PILImage.Image) -> Image:
    width, height = img.size
    if width * height * len(img.getbands()) > MAX_SAMPLES:
        raise DataError(f"dimension overflow: {width}x{height}x{len(img.getbands())}")
    if img.mode in _SIXTEEN_BIT_MODES:
        return Image(np.asarray(img, dtype=np.float64) / 65535.0)
    if img.mode == "1":
        img = img.convert("L")
    elif img.mode == "P":
        img = img.convert("RGBA" if "transparency" in img.info else "RGB")
    if img.mode not in _EIGHT_BIT_MODES:
        raise DataError(f"unsupported image mode {img.mode}")
    return Image(np.asarray(img, dtype=np.float64) / 255.0)


def load_image(path: Path) -> Image:
    path = Path(path)
    logger.debug("loading %s", path)
    try:
        with PILImage.open(path, formats=_FORMATS) as img:
            return _decode(img)
    except UnidentifiedImageError as exc:
        raise DataError(f"unsupported format: {path}") from exc
    except FileNotFoundError as exc:
        raise DataError(f"unreadable file {path}: {exc}") from exc
    except (OSError, ValueError, SyntaxError) as exc:
        raise DataError(f"unreadable image {path}: {exc}") from exc


def _save_plain_netpbm(samples: np.ndarray, path: Path, maxval: int) -> None:
    height, width, channels = samples.shape
    magic = "P2" if channels == 1 else "P3"
    rows = [" ".join(map(str, row.ravel())) for row in samples]
    path.write_text(f"{magic}\n{width} {height}\n{maxval}\n" + "\n".join(rows) + "\n")


def save_image(image: Image, path: Path, bit_depth: int = 8, ascii: bool = False) -> None:
    path = Path(path)
    if bit_depth not in (8, 16):
        raise DataError(f"unsupported bit depth {bit_depth}")
    maxval = 255 if bit_depth == 8 else 65535
    samples = np.round(image.data * maxval).astype(np.uint16 if bit_depth == 16 else np.uint8)
    suffix = path.suffix.lower()
    try:
        if suffix in (".pgm", ".ppm"):
            expected = 1 if suffix == ".pgm" else 3
            if image.channels != expected:
                raise DataError(f"channel mismatch: {suffix} needs {expected} channel(s), image has {image.channels}")
            if ascii:
                _save_plain_netpbm(samples, path, maxval)
            elif bit_depth == 16:
                if expected != 1:
                    raise DataError("channel mismatch: 16-bit netpbm output supports a single channel only")
                PILImage.fromarray(samples[:, :, 0].astype(np.int32)).save(path, format="PPM")
            else:
                array = samples[:, :, 0] if expected == 1 else samples
                PILImage.fromarray(array).save(path, format="PPM")
        elif suffix == ".png":
            if bit_depth == 16:
                if image.channels != 1:
                    raise DataError("channel mismatch: 16-bit PNG supports a single channel only")
                PILImage.fromarray(samples[:, :, 0]).save(path)
            else:
                array = samples[:, :, 0] if image.channels == 1 else samples
                PILImage.fromarray(array).save(path)
        else:
            raise DataError(f"unsupported format: {path}")
    except OSError as exc:
        raise DataError(f"unwritable path {path}: {exc}") from exc
    logger.debug("wrote %s (%d-bit)", path, bit_depth)


def load_pfm(path: Path) -> DisparityMap:
    path = Path(path)
    try:
        with path.open("rb") as handle:
            kind = handle.readline().strip()
            if kind != b"Pf":
                raise DataError(f"{path}: expected single-channel PFM, got {kind!r}")
            width, height = (int(v) for v in handle.readline().split())
            scale = float(handle.readline())
            if width <= 0 or height <= 0 or width * height > MAX_SAMPLES:
                raise DataError(f"dimension overflow: {width}x{height}")
            dtype = "<f4" if scale < 0 else ">f4"
            data = np.frombuffer(handle.read(), dtype=dtype)
    except OSError as exc:
        raise DataError(f"unreadable file {path}: {exc}") from exc
    except ValueError as exc:
        raise DataError(f"malformed PFM header in {path}") from exc
    if data.size != width * height:
        raise DataError(f"{path}: expected {width * height} samples, found {data.size}")
    disparity = np.flipud(data.reshape(height, width)).astype(np.float64)
    valid = np.isfinite(disparity)
    return DisparityMap(np.where(valid, disparity, 0.0), valid)


def save_pfm(disparity: DisparityMap, path: Path) -> None:
    path = Path(path)
    values = np.where(disparity.valid, disparity.disparity, np.inf).astype("<f4")
    header = f"Pf\n{disparity.width} {disparity.height}\n-1.0\n".encode()
    try:
        path.write_bytes(header + np.flipud(values).tobytes())
    except OSError as exc:
        raise DataError(f"unwritable path {path}: {exc}") from exc


def save_mask(valid: np.ndarray, path: Path) -> None:
    save_image(Image(np.asarray(valid, dtype=np.float64)), path)


def load_mask(path: Path) -> np.ndarray:
    return load_image(path).data[:, :, 0] > 0.5


def save_disparity_png(disparity: DisparityMap, path: Path, vmax: float) -> None:
    """Colour-coded disparity, cold (small) to warm (large); invalid pixels black."""
    save_image(Image(cold_to_warm(disparity.disparity, disparity.valid, vmax)), path)


def downscale_half(image: Image) -> Image:
    """Average each 2x2 block; edge blocks average the pixels available."""
    if image.height < 2 or image.width < 2:
        raise DataError(f"cannot halve a degenerate {image.height}x{image.width} image")
    h2, w2 = math.ceil(image.height / 2), math.ceil(image.width / 2)
    pad = ((0, 2 * h2 - image.height), (0, 2 * w2 - image.width), (0, 0))
    sums = np.pad(image.data, pad).reshape(h2, 2, w2, 2, image.channels).sum(axis=(1, 3))
    counts = np.pad(np.ones(image.data.shape[:2]), pad[:2]).reshape(h2, 2, w2, 2).sum(axis=(1, 3))
    return Image(sums / counts[:, :, None])


def downscale_pair(pair: ImagePair) -> ImagePair:
    return ImagePair(downscale_half(pair.left), downscale_half(pair.right))


def downscale_disparity_half(disparity: DisparityMap) -> DisparityMap:
    """Top-left sample of every 2x2 block, disparity halved with the image width."""
    return DisparityMap(disparity.disparity[::2, ::2] / 2.0, disparity.valid[::2, ::2])


def _tile_starts(length: int, tile: int, overlap: int) -> List[int]:
    if length <= tile:
        return [0]
    starts = list(range(0, length - tile + 1, tile - overlap))
    if starts[-1] + tile < length:
        starts.append(length - tile)
    return starts


def tile_pair(
    pair: ImagePair,
    tile_h: int,
    tile_w: int,
    overlap: int,
    d_max: int = 0,
    source_id: str = "",
) -> List[Tile]:
    """Cut a pair into overlapping tiles covering every pixel."""
    if overlap < d_max:
        raise DataError(f"tile overlap {overlap} is smaller than d_max {d_max}")
    height, width = pair.shape
    # an axis covered by a single tile needs no overlap
    if (height > tile_h and tile_h <= 2 * overlap) or (width > tile_w and tile_w <= 2 * overlap):
        raise DataError(f"tile {tile_h}x{tile_w} smaller than overlap requirement (> {2 * overlap})")
    tiles = []
    for row in _tile_starts(height, tile_h, overlap):
        for col in _tile_starts(width, tile_w, overlap):
            window = (slice(row, row + tile_h), slice(col, col + tile_w))
            tiles.append(
                Tile(
                    source_id=source_id,
                    origin=(row, col),
                    pair=ImagePair(Image(pair.left.data[window]), Image(pair.right.data[window])),
                )
            )
    return tiles


def stitch_disparity(tiles: Sequence[Tile], maps: Sequence[DisparityMap], height: int, width: int) -> DisparityMap:
    """Take every pixel from the tile whose centre is nearest (first tile wins ties)."""
    disparity = np.zeros((height, width))
    valid = np.zeros((height, width), dtype=bool)
    best = np.full((height, width), np.inf)
    rows, cols = np.mgrid[0:height, 0:width]
    for tile, part in zip(tiles, maps):
        r0, c0 = tile.origin
        h, w = part.shape
        window = (slice(r0, r0 + h), slice(c0, c0 + w))
        cy, cx = tile.center
        distance = (rows[window] - cy) ** 2 + (cols[window] - cx) ** 2
        closer = distance < best[window]
        best[window] = np.where(closer, distance, best[window])
        disparity[window] = np.where(closer, part.disparity, disparity[window])
        valid[window] = np.where(closer, part.valid, valid[window])
    return DisparityMap(disparity, valid)
