from pathlib import Path
from typing import Dict, List, Optional, Tuple

import typer

from ...context import reports_errors, resolve
from ...exceptions import DataError, UsageError
from ...function.evalharness import SPARSE_FRACTION, compare_models, format_table, report_json
from ...function.imaging import load_pfm
from ...models import DisparityMap
from ...store import MANIFEST, disparity_path, load_reference, read_manifest


def _references(folder: Path) -> List[Tuple[str, DisparityMap]]:
    """Corpus ground truth (occlusion-masked) or a plain directory of <name>_left.pfm maps."""
    if (folder / MANIFEST).exists():
        return [(entry.name, load_reference(entry)) for entry in read_manifest(folder)]
    return _maps(folder)


def _maps(folder: Path) -> List[Tuple[str, DisparityMap]]:
    paths = sorted(Path(folder).glob("*_left.pfm"))
    return [(path.name[: -len("_left.pfm")], load_pfm(path)) for path in paths]


@reports_errors
def evaluate(
    ctx: typer.Context,
    predictions: List[Path] = typer.Option(..., "--pred", help="Prediction directory; repeat to compare runs."),
    names: Optional[List[str]] = typer.Option(None, "--name", help="Row name per --pred (default: directory name)."),
    reference: Path = typer.Option(..., "--ref", help="Corpus directory or directory of reference maps."),
    thresholds: Optional[List[float]] = typer.Option(None, "--threshold", help="Error bound in pixels; repeatable."),
    fraction: Optional[float] = typer.Option(None, "--reference-fraction", help="Keep this share of reference pixels."),
    sparse: bool = typer.Option(False, "--sparse", help="Keep 5% of reference pixels, like a laser scan."),
    metric: bool = typer.Option(False, "--metric", help="Also report depth accuracy in meters."),
    json_out: Optional[Path] = typer.Option(None, "--json", help="Write the JSON report here."),
):
    """Recall and accuracy of one or more prediction directories against a reference."""
    if sparse and fraction is None:
        fraction = SPARSE_FRACTION
    config = resolve(
        ctx,
        **{"evaluation.thresholds": sorted(thresholds) if thresholds else None, "evaluation.reference_fraction": fraction},
    )
    if names and len(names) != len(predictions):
        raise UsageError("give one --name per --pred")
    references = _references(reference)
    if not references:
        raise DataError(f"no reference maps in {reference}")
    wanted = {name for name, _ in references}
    runs: List[Tuple[str, Dict[str, DisparityMap]]] = []
    for index, folder in enumerate(predictions):
        found = {name: path for name in wanted if (path := disparity_path(folder, name)).exists()}
        missing = sorted(wanted - set(found))
        if missing:
            raise DataError(f"{folder}: no prediction for {missing[0]}")
        runs.append((names[index] if names else Path(folder).name, {n: load_pfm(p) for n, p in found.items()}))

    rows = compare_models(references, runs, config.evaluation, config.camera if metric else None)
    typer.echo(format_table(rows, config.evaluation))
    payload = report_json(rows)
    if json_out is not None:
        json_out.parent.mkdir(parents=True, exist_ok=True)
        json_out.write_bytes(payload)
    else:
        typer.echo(payload.decode())
