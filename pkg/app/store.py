"""On-disk corpus and run directories.

A corpus directory holds one ``scene_XXXX/`` folder per pair, a
``corpus.yaml`` with the generating spec and a tab-separated
``manifest.txt``::

    index  seed  left  right  gt_left  gt_right  occ_left  occ_right

Paths are relative to the corpus directory. Lines starting with ``#`` are
comments.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence

import yaml

from .exceptions import DataError
from .function.imaging import (
    downscale_disparity_half,
    downscale_pair,
    load_image,
    load_mask,
    load_pfm,
    save_image,
    save_mask,
    save_pfm,
)
from .models import DisparityMap, ImagePair, SyntheticScene
from .schemas import CorpusSpec
from .tools import ordered_map

logger = logging.getLogger(__name__)

MANIFEST = "manifest.txt"
CORPUS_SPEC = "corpus.yaml"
RUN_LOG = "run_log.jsonl"
SCENE_FILES = ("left.png", "right.png", "gt_left.pfm", "gt_right.pfm", "occ_left.pgm", "occ_right.pgm")


@dataclass(frozen=True)
class CorpusEntry:
    index: int
    seed: Optional[int]
    left: Path
    right: Path
    gt_left: Optional[Path] = None
    gt_right: Optional[Path] = None
    occ_left: Optional[Path] = None
    occ_right: Optional[Path] = None

    @property
    def name(self) -> str:
        return f"scene_{self.index:04d}"


def scene_dir(root: Path, index: int) -> Path:
    return Path(root) / f"scene_{index:04d}"


def save_corpus(scenes: Sequence[SyntheticScene], spec: CorpusSpec, out_dir: Path) -> Path:
    """Write every scene plus manifest and spec; returns the manifest path."""
    root = Path(out_dir)
    try:
        root.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DataError(f"unwritable path {root}: {exc}") from exc
    lines = ["# index\tseed\t" + "\t".join(name.split(".")[0] for name in SCENE_FILES)]
    for index, scene in enumerate(scenes):
        folder = scene_dir(root, index)
        folder.mkdir(exist_ok=True)
        left, right, gt_left, gt_right, occ_left, occ_right = (folder / name for name in SCENE_FILES)
        save_image(scene.pair.left, left)
        save_image(scene.pair.right, right)
        save_pfm(scene.gt_disparity_left, gt_left)
        save_pfm(scene.gt_disparity_right, gt_right)
        # masks store visibility: white = seen in both views
        save_mask(~scene.occlusion_left, occ_left)
        save_mask(~scene.occlusion_right, occ_right)
        relative = [str(p.relative_to(root)) for p in (left, right, gt_left, gt_right, occ_left, occ_right)]
        lines.append("\t".join([str(index), str(scene.rng_seed), *relative]))
    manifest = root / MANIFEST
    manifest.write_text("\n".join(lines) + "\n")
    (root / CORPUS_SPEC).write_text(yaml.safe_dump(spec.model_dump(mode="json"), sort_keys=True))
    logger.info("wrote %d scenes to %s", len(scenes), root)
    return manifest


def read_manifest(corpus_dir: Path) -> List[CorpusEntry]:
    root = Path(corpus_dir)
    path = root / MANIFEST
    try:
        text = path.read_text()
    except OSError as exc:
        raise DataError(f"unreadable manifest {path}: {exc}") from exc
    entries = []
    for number, line in enumerate(text.splitlines(), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) not in (4, 8):
            raise DataError(f"{path}:{number}: expected 4 or 8 tab-separated fields, got {len(fields)}")
        try:
            index = int(fields[0])
            seed = int(fields[1]) if fields[1] not in ("", "-") else None
        except ValueError as exc:
            raise DataError(f"{path}:{number}: bad index or seed") from exc
        paths = [root / field for field in fields[2:]]
        entries.append(CorpusEntry(index, seed, *paths))
    return entries


def load_corpus_spec(corpus_dir: Path) -> Optional[CorpusSpec]:
    path = Path(corpus_dir) / CORPUS_SPEC
    if not path.exists():
        return None
    try:
        return CorpusSpec(**(yaml.safe_load(path.read_text()) or {}))
    except (yaml.YAMLError, ValueError) as exc:
        raise DataError(f"unreadable corpus spec {path}: {exc}") from exc


def load_pair(entry: CorpusEntry) -> ImagePair:
    try:
        return ImagePair(load_image(entry.left), load_image(entry.right))
    except DataError as exc:
        raise DataError(f"{entry.name}: {exc.detail}") from exc


def load_reference(entry: CorpusEntry) -> DisparityMap:
    """Left ground truth; occlusion mask (when listed) restricts validity."""
    if entry.gt_left is None:
        raise DataError(f"{entry.name}: corpus lists no ground truth")
    reference = load_pfm(entry.gt_left)
    if entry.occ_left is not None and entry.occ_left.exists():
        reference = reference.with_valid(reference.valid & load_mask(entry.occ_left))
    return reference


def checkpoint_path(run_dir: Path, iteration: int) -> Path:
    return Path(run_dir) / f"model_iter{iteration}.bin"


def last_checkpoint(run_dir: Path) -> Optional[int]:
    """Highest iteration with a persisted checkpoint, or None."""
    found = []
    for path in Path(run_dir).glob("model_iter*.bin"):
        suffix = path.stem[len("model_iter"):]
        if suffix.isdigit():
            found.append(int(suffix))
    return max(found) if found else None


def disparity_path(folder: Path, name: str, view: str = "left") -> Path:
    return Path(folder) / f"{name}_{view}.pfm"


@dataclass(frozen=True)
class LoadedPair:
    name: str
    pair: ImagePair
    reference: Optional[DisparityMap] = None


def load_corpus(corpus_dir: Path, half_resolution: bool = False, jobs: int = 1) -> List[LoadedPair]:
    """Every pair of a corpus with its left reference when the manifest lists one."""
    entries = read_manifest(corpus_dir)

    def load(entry: CorpusEntry) -> LoadedPair:
        pair = load_pair(entry)
        reference = load_reference(entry) if entry.gt_left is not None else None
        if reference is not None and reference.shape != pair.shape:
            raise DataError(f"{entry.name}: reference {reference.shape} and images {pair.shape} differ in size")
        if half_resolution:
            pair = downscale_pair(pair)
            reference = downscale_disparity_half(reference) if reference is not None else None
        return LoadedPair(entry.name, pair, reference)

    corpus = ordered_map(load, entries, jobs)
    logger.info("loaded %d pairs from %s%s", len(corpus), corpus_dir, " at half resolution" if half_resolution else "")
    return corpus
