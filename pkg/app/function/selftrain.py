"""Maximum-likelihood training on filtered labels and the self-training loop.

The matcher's costs become a per-pixel distribution p(d) = softmax_d(-cost / T).
Training minimises the mean negative log-likelihood of the label over the
valid pixels; only the unary model is trained, the pairwise term stays fixed.

The loop alternates pseudo-label generation (solve both views, keep what
survives the left-right check) and retraining, persisting
``model_iter{k}.bin`` after every iteration. Each iteration starts a fresh
optimizer and shuffles with a seed derived from (train seed, k), so a run
resumed from ``model_iter{k}.bin`` reproduces the uninterrupted run.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from ..exceptions import DataError, NumericalError
from ..log import RunLog
from ..models import CostVolume, DisparityMap, ImagePair, TrainingSample, UnaryModel
from ..schemas import CameraGeometry, EvalConfig, EvalReport, OptimizerKind, PairwiseModel, SelfTrainConfig, TrainConfig
from ..store import LoadedPair, checkpoint_path, disparity_path, last_checkpoint
from ..tools import derive_seed, ordered_map
from .consistency import lr_check, survivor_stats
from .evalharness import evaluate_corpus
from .imaging import load_pfm, tile_pair
from .matching import Matcher, disparity_pair, predict
from .unary_model import cost_backward, cost_forward, load_checkpoint, save_checkpoint

logger = logging.getLogger(__name__)


def one_hot(pseudo_gt: DisparityMap, d_max: int) -> Tuple[np.ndarray, np.ndarray]:
    """(H, W, d_max) targets and the (H, W) mask of labelled pixels."""
    mask = pseudo_gt.valid.copy()
    labels = np.where(mask, pseudo_gt.disparity, 0.0)
    if not np.array_equal(labels, np.round(labels)):
        raise DataError("one-hot targets need integer labels")
    labels = labels.astype(np.int64)
    if labels.min(initial=0) < 0 or labels.max(initial=0) >= d_max:
        raise DataError(f"label out of range [0, {d_max})")
    target = (labels[:, :, None] == np.arange(d_max)).astype(np.float64)
    target[~mask] = 0.0
    return target, mask


def nll_loss(
    cost: CostVolume, target: np.ndarray, mask: np.ndarray, temperature: float = 1.0
) -> Tuple[float, CostVolume]:
    """Mean negative log-likelihood over masked pixels and its gradient w.r.t. the costs."""
    count = int(mask.sum())
    if count == 0:
        raise DataError("loss mask is empty")
    logits = -cost.cost / temperature
    shifted = logits - logits.max(axis=2, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=2, keepdims=True))
    log_p = shifted - log_norm
    loss = -(target * log_p)[mask].sum() / count
    if not np.isfinite(loss):
        raise NumericalError("non-finite training loss")
    # d loss / d logits = (p - target) / count; logits = -cost / T
    adjoint = -(np.exp(log_p) - target) / (count * temperature)
    adjoint[~mask] = 0.0
    return float(loss), CostVolume(adjoint)


class SGD:
    def __init__(self, cfg: TrainConfig):
        self.learning_rate = cfg.learning_rate

    def step(self, params: List[np.ndarray], grads: List[np.ndarray]) -> None:
        for param, grad in zip(params, grads):
            param[...] = (param.astype(np.float64) - self.learning_rate * grad).astype(param.dtype)


class Adam:
    def __init__(self, cfg: TrainConfig):
        self.learning_rate = cfg.learning_rate
        self.beta1, self.beta2, self.eps = cfg.beta1, cfg.beta2, cfg.eps_opt
        self.t = 0
        self.m: List[np.ndarray] = []
        self.v: List[np.ndarray] = []

    def step(self, params: List[np.ndarray], grads: List[np.ndarray]) -> None:
        if not self.m:
            self.m = [np.zeros(p.shape) for p in params]
            self.v = [np.zeros(p.shape) for p in params]
        self.t += 1
        correction1 = 1.0 - self.beta1 ** self.t
        correction2 = 1.0 - self.beta2 ** self.t
        for param, grad, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * grad
            v *= self.beta2
            v += (1.0 - self.beta2) * grad * grad
            update = self.learning_rate * (m / correction1) / (np.sqrt(v / correction2) + self.eps)
            param[...] = (param.astype(np.float64) - update).astype(param.dtype)


def make_optimizer(cfg: TrainConfig):
    return Adam(cfg) if cfg.optimizer == OptimizerKind.adam else SGD(cfg)


def sample_gradient(model: UnaryModel, sample: TrainingSample, temperature: float) -> Tuple[float, List[np.ndarray]]:
    target, mask = one_hot(sample.pseudo_gt, model.d_max)
    cost, tape = cost_forward(sample.pair, model)
    loss, adjoint = nll_loss(cost, target, mask, temperature)
    return loss, cost_backward(tape, model, adjoint)


def train_epochs(
    model: UnaryModel,
    samples: Sequence[TrainingSample],
    cfg: TrainConfig,
    iteration: int = 0,
    jobs: int = 1,
    run_log: Optional[RunLog] = None,
) -> Tuple[UnaryModel, List[float]]:
    """Train a copy of `model`; returns it with the mean loss of every epoch.

    Batches are drawn from a permutation seeded by (cfg.seed, iteration).
    Per-sample gradients may be computed concurrently; they are reduced in
    batch order.
    """
    if not samples:
        raise DataError("no training samples")
    model = model.copy()
    optimizer = make_optimizer(cfg)
    rng = np.random.default_rng(derive_seed(cfg.seed, iteration))
    curve = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(samples))
        losses = []
        for start in range(0, len(order), cfg.batch):
            batch = [samples[i] for i in order[start:start + cfg.batch]]
            try:
                results = ordered_map(lambda s: sample_gradient(model, s, cfg.softmax_temperature), batch, jobs)
            except NumericalError as exc:
                names = ", ".join(s.source_id or "?" for s in batch)
                raise NumericalError(f"epoch {epoch + 1}, batch [{names}]: {exc.detail}") from exc
            grads = [sum(parts) / len(batch) for parts in zip(*(g for _, g in results))]
            optimizer.step(model.parameters(), grads)
            losses.extend(loss for loss, _ in results)
        curve.append(float(np.mean(losses)))
        logger.info("epoch %d/%d: loss %.4f", epoch + 1, cfg.epochs, curve[-1])
        if run_log is not None:
            run_log.write("epoch", iteration=iteration, epoch=epoch + 1, loss=curve[-1])
    return model, curve


def samples_from_ground_truth(corpus: Sequence[LoadedPair]) -> List[TrainingSample]:
    """Supervised samples from reference maps (fractional values rounded to the nearest label)."""
    samples = []
    for item in corpus:
        if item.reference is None:
            raise DataError(f"{item.name}: no ground truth to train on")
        labels = np.floor(item.reference.disparity + 0.5)
        if item.reference.valid.any():
            samples.append(TrainingSample(item.pair, DisparityMap(labels, item.reference.valid), item.name))
    return samples


def samples_from_label_dir(corpus: Sequence[LoadedPair], label_dir: Path) -> List[TrainingSample]:
    """Samples from filtered label maps written by the `filter` command (``<name>_left.pfm``)."""
    samples = []
    for item in corpus:
        labels = load_pfm(disparity_path(label_dir, item.name))
        if labels.shape != item.pair.shape:
            raise DataError(f"{item.name}: labels {labels.shape} and images {item.pair.shape} differ in size")
        if labels.valid.any():
            rounded = DisparityMap(np.floor(labels.disparity + 0.5), labels.valid)
            samples.append(TrainingSample(item.pair, rounded, item.name))
        else:
            logger.warning("%s: label map has no valid pixel, skipped", item.name)
    return samples


def tile_samples(samples: Sequence[TrainingSample], tile_h: int, tile_w: int, d_max: int) -> List[TrainingSample]:
    """Cut samples into tiles overlapping by d_max; labels whose match leaves the tile are dropped."""
    tiled = []
    for sample in samples:
        for tile in tile_pair(sample.pair, tile_h, tile_w, overlap=d_max, d_max=d_max, source_id=sample.source_id):
            r0, c0 = tile.origin
            h, w = tile.pair.shape
            window = (slice(r0, r0 + h), slice(c0, c0 + w))
            labels = sample.pseudo_gt.disparity[window]
            valid = sample.pseudo_gt.valid[window] & (np.arange(w)[None, :] - labels >= 0)
            if valid.any():
                tiled.append(TrainingSample(tile.pair, DisparityMap(labels, valid), f"{sample.source_id}@{r0},{c0}"))
    return tiled


def pseudo_label(pair: ImagePair, matcher: Matcher, cfg: SelfTrainConfig) -> DisparityMap:
    d_l, d_r, _ = disparity_pair(pair, matcher)
    return lr_check(d_l, d_r, cfg.filter) if cfg.use_filter else d_l


def generate_pseudo_labels(
    corpus: Sequence[LoadedPair],
    model: UnaryModel,
    cfg: SelfTrainConfig,
    pairwise: PairwiseModel = PairwiseModel(),
    jobs: int = 1,
) -> Tuple[List[TrainingSample], List[float]]:
    """Filtered integer labels for every pair, and the survivor fraction of each pair.

    Pairs without a single surviving pixel are skipped.
    """
    matcher = Matcher(pairwise=pairwise, d_max=model.d_max, solver=cfg.solver, model=model)
    labels = ordered_map(lambda item: pseudo_label(item.pair, matcher, cfg), corpus, jobs)
    samples, fractions = [], []
    for item, filtered in zip(corpus, labels):
        fraction, count = survivor_stats(filtered)
        fractions.append(fraction)
        if count == 0:
            logger.warning("%s: no pixel survived the consistency check, skipped", item.name)
            continue
        samples.append(TrainingSample(item.pair, filtered, item.name))
    return samples, fractions


@dataclass
class IterationResult:
    iteration: int
    checkpoint: Path
    report: Optional[EvalReport]
    survivor_fraction: Optional[float] = None
    losses: List[float] = field(default_factory=list)


def evaluate_model(
    corpus: Sequence[LoadedPair],
    matcher: Matcher,
    cfg: SelfTrainConfig,
    eval_cfg: EvalConfig,
    camera: Optional[CameraGeometry] = None,
    jobs: int = 1,
    run: str = "",
) -> Optional[EvalReport]:
    """Report of the filtered, refined predictions; None when the corpus has no references."""
    references = [(item.name, item.reference) for item in corpus if item.reference is not None]
    if not references:
        return None
    predictions = ordered_map(lambda item: (item.name, predict(item.pair, matcher, cfg.filter)), corpus, jobs)
    return evaluate_corpus(predictions, references, eval_cfg, camera, run=run)


def self_train(
    corpus: Sequence[LoadedPair],
    init: UnaryModel,
    cfg: SelfTrainConfig,
    run_dir: Path,
    pairwise: PairwiseModel = PairwiseModel(),
    eval_cfg: EvalConfig = EvalConfig(),
    camera: Optional[CameraGeometry] = None,
    resume: bool = False,
    jobs: int = 1,
    run_log: Optional[RunLog] = None,
) -> List[IterationResult]:
    """Iteration 0 is `init`; iteration k trains on labels produced by model k-1."""
    if not corpus:
        raise DataError("self-training needs a non-empty corpus")
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    models = [init]
    last = last_checkpoint(run_dir) if resume else None
    if last is not None:
        last = min(last, cfg.iterations)
        models = [load_checkpoint(checkpoint_path(run_dir, k)) for k in range(last + 1)]
        logger.info("resuming after iteration %d", last)
    else:
        save_checkpoint(init, checkpoint_path(run_dir, 0))

    def record(k: int, model: UnaryModel, fraction: Optional[float], losses: List[float]) -> IterationResult:
        matcher = Matcher(pairwise=pairwise, d_max=model.d_max, solver=cfg.solver, model=model)
        report = evaluate_model(corpus, matcher, cfg, eval_cfg, camera, jobs, run=f"iter{k}")
        if report is not None:
            logger.info("iteration %d: recall %.3f", k, report.recall)
        if run_log is not None:
            run_log.write(
                "iteration",
                iteration=k,
                checkpoint=str(checkpoint_path(run_dir, k)),
                survivor_fraction=fraction,
                report=report.model_dump(mode="json") if report else None,
            )
        return IterationResult(k, checkpoint_path(run_dir, k), report, fraction, losses)

    results = [record(k, model, None, []) for k, model in enumerate(models)]
    model = models[-1]
    for k in range(len(models), cfg.iterations + 1):
        samples, fractions = generate_pseudo_labels(corpus, model, cfg, pairwise, jobs)
        fraction = float(np.mean(fractions))
        logger.info("iteration %d: %d training pairs, mean survivor fraction %.3f", k, len(samples), fraction)
        if run_log is not None:
            run_log.write("pseudo_labels", iteration=k, survivor_fractions=fractions)
        if not samples:
            raise DataError(f"iteration {k}: no pseudo-label survived filtering")
        if cfg.train.tile_h and cfg.train.tile_w:
            samples = tile_samples(samples, cfg.train.tile_h, cfg.train.tile_w, model.d_max)
        model, losses = train_epochs(model, samples, cfg.train, iteration=k, jobs=jobs, run_log=run_log)
        save_checkpoint(model, checkpoint_path(run_dir, k))
        if run_log is not None:
            run_log.write("checkpoint", iteration=k, path=str(checkpoint_path(run_dir, k)))
        results.append(record(k, model, fraction, losses))
    return results
