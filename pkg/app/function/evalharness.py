"""Recall, accuracy at error thresholds, and disparity/depth conversion.

P_S are the valid predicted pixels, P_L the valid reference pixels.
recall = |P_S & P_L| / |P_L|; accuracy at t is the share of P_S & P_L whose
absolute disparity error is at most t. Pixels missing from the prediction
lower recall and never count towards accuracy. Corpus figures are pixel
weighted: counts are summed over pairs before dividing.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import orjson
from rich.table import Table

from ..exceptions import DataError
from ..models import DepthMap, DisparityMap
from ..schemas import CameraGeometry, EvalConfig, EvalReport, ModelRow
from ..tools import derive_seed

logger = logging.getLogger(__name__)

SPARSE_FRACTION = 0.05


def _check_shapes(predicted: DisparityMap, reference: DisparityMap, name: str = "") -> None:
    if predicted.shape != reference.shape:
        where = f"{name}: " if name else ""
        raise DataError(f"{where}prediction {predicted.shape} and reference {reference.shape} differ in size")


def recall(predicted: DisparityMap, reference: DisparityMap) -> float:
    _check_shapes(predicted, reference)
    n_reference = int(reference.valid.sum())
    if n_reference == 0:
        raise DataError("reference has no valid pixel")
    return int((predicted.valid & reference.valid).sum()) / n_reference


def accuracy_at(predicted: DisparityMap, reference: DisparityMap, thresholds: Sequence[float]) -> Dict[float, float]:
    _check_shapes(predicted, reference)
    both = predicted.valid & reference.valid
    if not both.any():
        raise DataError("prediction and reference share no valid pixel")
    error = np.abs(predicted.disparity[both] - reference.disparity[both])
    return {float(t): float((error <= t).mean()) for t in thresholds}


def disparity_to_depth(d: DisparityMap, geom: CameraGeometry) -> DepthMap:
    """Z = focal_length * baseline / d; zero disparities become invalid."""
    valid = d.valid & (d.disparity > 0)
    safe = np.where(valid, d.disparity, 1.0)
    return DepthMap(np.where(valid, geom.focal_length * geom.baseline / safe, 0.0), valid)


def depth_to_disparity(depth: DepthMap, geom: CameraGeometry) -> DisparityMap:
    valid = depth.valid & (depth.depth > 0)
    safe = np.where(valid, depth.depth, 1.0)
    return DisparityMap(np.where(valid, geom.focal_length * geom.baseline / safe, 0.0), valid)


def accuracy_metric(
    predicted: DisparityMap, reference: DisparityMap, geom: CameraGeometry, thresholds_m: Sequence[float]
) -> Dict[float, float]:
    """Share of P_S & P_L whose depth error is at most t meters (pixels without depth count as misses)."""
    _check_shapes(predicted, reference)
    both = predicted.valid & reference.valid
    if not both.any():
        raise DataError("prediction and reference share no valid pixel")
    error = _depth_error(predicted, reference, geom)[both]
    return {float(t): float((error <= t).mean()) for t in thresholds_m}


def _depth_error(predicted: DisparityMap, reference: DisparityMap, geom: CameraGeometry) -> np.ndarray:
    z_pred = disparity_to_depth(predicted, geom)
    z_ref = disparity_to_depth(reference, geom)
    measured = z_pred.valid & z_ref.valid
    return np.where(measured, np.abs(z_pred.depth - z_ref.depth), np.inf)


def subsample_reference(reference: DisparityMap, fraction: float = SPARSE_FRACTION, seed: int = 0) -> DisparityMap:
    """Keep round(fraction * |P_L|) reference pixels drawn without replacement.

    The default share mimics a sparse laser scan of the scene.
    """
    if fraction >= 1.0:
        return reference
    flat = np.flatnonzero(reference.valid)
    keep = np.random.default_rng(seed).choice(flat, size=int(round(fraction * flat.size)), replace=False)
    valid = np.zeros(reference.valid.size, dtype=bool)
    valid[keep] = True
    return reference.with_valid(valid.reshape(reference.shape))


@dataclass
class _Counts:
    n_reference: int = 0
    n_predicted: int = 0
    n_intersection: int = 0
    abs_error: float = 0.0
    within: Dict[float, int] = field(default_factory=dict)
    within_metric: Dict[float, int] = field(default_factory=dict)

    def add(self, other: "_Counts") -> None:
        self.n_reference += other.n_reference
        self.n_predicted += other.n_predicted
        self.n_intersection += other.n_intersection
        self.abs_error += other.abs_error
        for t, n in other.within.items():
            self.within[t] = self.within.get(t, 0) + n
        for t, n in other.within_metric.items():
            self.within_metric[t] = self.within_metric.get(t, 0) + n

    def report(self, cfg: EvalConfig, camera: Optional[CameraGeometry]) -> EvalReport:
        if self.n_reference == 0:
            raise DataError("reference has no valid pixel")
        n = self.n_intersection
        if n == 0:
            logger.warning("prediction covers no reference pixel; accuracy reported as 0")
        return EvalReport(
            recall=n / self.n_reference,
            accuracy={t: (self.within[t] / n if n else 0.0) for t in cfg.thresholds},
            n_reference=self.n_reference,
            n_predicted=self.n_predicted,
            n_intersection=n,
            mean_abs_error=self.abs_error / n if n else 0.0,
            metric_accuracy=(
                {t: (self.within_metric[t] / n if n else 0.0) for t in cfg.metric_thresholds} if camera else None
            ),
        )


def _count(
    predicted: DisparityMap, reference: DisparityMap, cfg: EvalConfig, camera: Optional[CameraGeometry], name: str = ""
) -> _Counts:
    _check_shapes(predicted, reference, name)
    both = predicted.valid & reference.valid
    error = np.abs(predicted.disparity[both] - reference.disparity[both])
    counts = _Counts(
        n_reference=int(reference.valid.sum()),
        n_predicted=int(predicted.valid.sum()),
        n_intersection=int(both.sum()),
        abs_error=float(error.sum()),
        within={t: int((error <= t).sum()) for t in cfg.thresholds},
    )
    if camera is not None:
        depth_error = _depth_error(predicted, reference, camera)[both]
        counts.within_metric = {t: int((depth_error <= t).sum()) for t in cfg.metric_thresholds}
    return counts


def evaluate(
    predicted: DisparityMap,
    reference: DisparityMap,
    cfg: EvalConfig = EvalConfig(),
    camera: Optional[CameraGeometry] = None,
) -> EvalReport:
    return _count(predicted, reference, cfg, camera).report(cfg, camera)


def evaluate_corpus(
    predictions: Sequence[Tuple[str, DisparityMap]],
    references: Sequence[Tuple[str, DisparityMap]],
    cfg: EvalConfig = EvalConfig(),
    camera: Optional[CameraGeometry] = None,
    run: str = "",
) -> EvalReport:
    """Pixel-weighted report over named pairs; every reference needs a prediction."""
    by_name = dict(predictions)
    total = _Counts(within={t: 0 for t in cfg.thresholds}, within_metric={t: 0 for t in cfg.metric_thresholds})
    for index, (name, reference) in enumerate(references):
        if name not in by_name:
            raise DataError(f"run {run or '?'} has no prediction for {name}")
        reference = subsample_reference(reference, cfg.reference_fraction, derive_seed(cfg.reference_seed, index))
        total.add(_count(by_name[name], reference, cfg, camera, name))
    return total.report(cfg, camera)


def compare_models(
    references: Sequence[Tuple[str, DisparityMap]],
    runs: Sequence[Tuple[str, Mapping[str, DisparityMap]]],
    cfg: EvalConfig = EvalConfig(),
    camera: Optional[CameraGeometry] = None,
) -> List[ModelRow]:
    return [
        ModelRow(name=name, report=evaluate_corpus(list(maps.items()), references, cfg, camera, run=name))
        for name, maps in runs
    ]


def report_table(rows: Sequence[ModelRow], cfg: EvalConfig = EvalConfig()) -> Table:
    table = Table(title="Evaluation")
    table.add_column("Model")
    table.add_column("Recall [%]", justify="right")
    for t in cfg.thresholds:
        table.add_column(f"<= {t:g} px [%]", justify="right")
    with_metric = any(row.report.metric_accuracy for row in rows)
    if with_metric:
        for t in cfg.metric_thresholds:
            table.add_column(f"<= {t:g} m [%]", justify="right")
    table.add_column("MAE [px]", justify="right")
    for row in rows:
        report = row.report
        cells = [row.name, f"{100 * report.recall:.1f}"]
        cells += [f"{100 * report.accuracy[t]:.1f}" for t in cfg.thresholds]
        if with_metric:
            metric = report.metric_accuracy or {}
            cells += [f"{100 * metric[t]:.1f}" if t in metric else "-" for t in cfg.metric_thresholds]
        cells.append(f"{report.mean_abs_error:.3f}")
        table.add_row(*cells)
    return table


def format_table(rows: Sequence[ModelRow], cfg: EvalConfig = EvalConfig()) -> str:
    """Fixed-width plain text version of `report_table`."""
    header = ["Model", "Recall[%]"] + [f"<={t:g}px[%]" for t in cfg.thresholds] + ["MAE[px]"]
    lines = []
    for row in rows:
        report = row.report
        lines.append(
            [row.name, f"{100 * report.recall:.1f}"]
            + [f"{100 * report.accuracy[t]:.1f}" for t in cfg.thresholds]
            + [f"{report.mean_abs_error:.3f}"]
        )
    widths = [max(len(cell) for cell in column) for column in zip(header, *lines)]
    return "\n".join(
        "  ".join(cell.ljust(w) if i == 0 else cell.rjust(w) for i, (cell, w) in enumerate(zip(cells, widths)))
        for cells in [header] + lines
    )


def report_json(rows: Sequence[ModelRow]) -> bytes:
    return orjson.dumps([row.model_dump(mode="json") for row in rows], option=orjson.OPT_INDENT_2)
