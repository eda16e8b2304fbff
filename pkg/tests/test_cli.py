import numpy as np
import orjson
import pytest
import yaml
from typer.testing import CliRunner

from app.function.imaging import load_pfm, save_pfm
from app.main import app, run
from app.models import DisparityMap
from app.store import disparity_path, load_reference, read_manifest

runner = CliRunner()

FLAT = {
    "jobs": 1,
    "verbosity": 0,
    "corpus": {
        "n_pairs": 1,
        "width": 48,
        "height": 16,
        "d_max": 8,
        "noise_sigma": 0.0,
        "n_rectangles": 0,
        "ground_range": [3, 3],
    },
    "network": {"d_max": 8, "channels": 4, "layers": 2},
}

TINY = {
    "jobs": 1,
    "verbosity": 0,
    "corpus": {"n_pairs": 2, "width": 32, "height": 12, "d_max": 4, "noise_sigma": 0.01, "n_rectangles": 1},
    "network": {"d_max": 4, "channels": 4, "layers": 2},
    "train": {"epochs": 2, "learning_rate": 0.01},
    "selftrain": {"iterations": 2, "train": {"epochs": 1, "learning_rate": 0.01}},
}


@pytest.fixture
def flat_config(tmp_path):
    path = tmp_path / "flat.yaml"
    path.write_text(yaml.safe_dump(FLAT))
    return path


@pytest.fixture
def tiny_config(tmp_path):
    path = tmp_path / "tiny.yaml"
    path.write_text(yaml.safe_dump(TINY))
    return path


def invoke(config, *args):
    result = runner.invoke(app, ["--config", str(config), *map(str, args)])
    return result


def synth(config, out, seed=0):
    result = invoke(config, "synth", "--out", out, "--seed", seed)
    assert result.exit_code == 0, result.output
    return out


def test_synth_is_reproducible(tiny_config, tmp_path):
    a = synth(tiny_config, tmp_path / "a", seed=4)
    b = synth(tiny_config, tmp_path / "b", seed=4)

    files = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
    assert len(files) == 2 + 2 * 6
    for name in files:
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_synth_creates_missing_directories(tiny_config, tmp_path):
    out = synth(tiny_config, tmp_path / "deep" / "er" / "corpus")

    assert len(read_manifest(out)) == 2


def test_synth_flags_override_the_file(tiny_config, tmp_path):
    result = invoke(tiny_config, "synth", "--out", tmp_path / "c", "--pairs", 3, "--width", 40)

    assert result.exit_code == 0, result.output
    entries = read_manifest(tmp_path / "c")
    assert len(entries) == 3
    assert load_reference(entries[0]).shape == (12, 40)


def test_synth_rejects_a_range_wider_than_the_image(tiny_config, tmp_path):
    result = invoke(tiny_config, "synth", "--out", tmp_path / "c", "--d-max", 32)

    assert result.exit_code == 1
    assert "invalid configuration" in result.output


def test_census_matching_recovers_a_pure_shift(flat_config, tmp_path):
    corpus = synth(flat_config, tmp_path / "corpus")

    result = invoke(flat_config, "match", "--corpus", corpus, "--census", "--solver", "wta", "--out", tmp_path / "m")

    assert result.exit_code == 0, result.output
    assert (tmp_path / "m" / "scene_0000_left.png").exists()
    predicted = load_pfm(disparity_path(tmp_path / "m", "scene_0000"))
    reference = load_reference(read_manifest(corpus)[0])
    region = reference.valid.copy()
    region[:, :5] = False
    region[:, -2:] = False
    assert np.mean(predicted.disparity[region] == reference.disparity[region]) > 0.97


def test_matching_twice_gives_identical_maps(flat_config, tmp_path):
    corpus = synth(flat_config, tmp_path / "corpus")

    for out in ("m1", "m2"):
        result = invoke(flat_config, "match", "--corpus", corpus, "--census", "--out", tmp_path / out, "--no-png")
        assert result.exit_code == 0, result.output

    for view in ("left", "right"):
        first = disparity_path(tmp_path / "m1", "scene_0000", view).read_bytes()
        assert first == disparity_path(tmp_path / "m2", "scene_0000", view).read_bytes()


def test_single_pair_matching(flat_config, tmp_path):
    corpus = synth(flat_config, tmp_path / "corpus")
    entry = read_manifest(corpus)[0]

    result = invoke(
        flat_config, "match", "--left", entry.left, "--right", entry.right, "--name", "solo",
        "--census", "--refine", "--out", tmp_path / "m",
    )

    assert result.exit_code == 0, result.output
    assert disparity_path(tmp_path / "m", "solo", "right").exists()


def test_matching_needs_exactly_one_cost_source(flat_config, tmp_path):
    corpus = synth(flat_config, tmp_path / "corpus")

    result = invoke(flat_config, "match", "--corpus", corpus, "--out", tmp_path / "m")

    assert result.exit_code == 1
    assert "--model" in result.output


def test_bad_checkpoint_is_a_data_error(flat_config, tmp_path):
    corpus = synth(flat_config, tmp_path / "corpus")
    checkpoint = tmp_path / "model.bin"
    checkpoint.write_bytes(b"NOPE" + bytes(40))

    result = invoke(flat_config, "match", "--corpus", corpus, "--model", checkpoint, "--out", tmp_path / "m")

    assert result.exit_code == 2
    assert "checkpoint version mismatch" in result.output


def test_filter_writes_maps_and_masks(flat_config, tmp_path):
    corpus = synth(flat_config, tmp_path / "corpus")
    invoke(flat_config, "match", "--corpus", corpus, "--census", "--out", tmp_path / "m")

    result = invoke(flat_config, "filter", "--in", tmp_path / "m", "--out", tmp_path / "f", "--epsilon", 0.5)

    assert result.exit_code == 0, result.output
    filtered = load_pfm(disparity_path(tmp_path / "f", "scene_0000"))
    assert (tmp_path / "f" / "scene_0000_mask.pgm").exists()
    assert filtered.valid.mean() > 0.5


def test_filter_needs_maps(flat_config, tmp_path):
    (tmp_path / "empty").mkdir()

    result = invoke(flat_config, "filter", "--in", tmp_path / "empty")

    assert result.exit_code == 2


def test_evaluating_the_ground_truth_is_perfect(flat_config, tmp_path):
    corpus = synth(flat_config, tmp_path / "corpus")
    entry = read_manifest(corpus)[0]
    (tmp_path / "pred").mkdir()
    save_pfm(load_reference(entry), disparity_path(tmp_path / "pred", entry.name))

    result = invoke(flat_config, "eval", "--pred", tmp_path / "pred", "--ref", corpus, "--json", tmp_path / "r.json")

    assert result.exit_code == 0, result.output
    (row,) = orjson.loads((tmp_path / "r.json").read_bytes())
    assert row["name"] == "pred"
    assert row["report"]["recall"] == 1.0
    assert set(row["report"]["accuracy"].values()) == {1.0}


def test_evaluation_size_mismatch_names_the_pair(flat_config, tmp_path):
    (tmp_path / "ref").mkdir()
    (tmp_path / "pred").mkdir()
    save_pfm(DisparityMap.dense(np.zeros((4, 4))), disparity_path(tmp_path / "ref", "p7"))
    save_pfm(DisparityMap.dense(np.zeros((4, 5))), disparity_path(tmp_path / "pred", "p7"))

    result = invoke(flat_config, "eval", "--pred", tmp_path / "pred", "--ref", tmp_path / "ref")

    assert result.exit_code == 2
    assert "p7" in result.output


def test_train_then_selftrain(tiny_config, tmp_path):
    corpus = synth(tiny_config, tmp_path / "corpus")
    bootstrap = tmp_path / "bootstrap.bin"

    trained = invoke(tiny_config, "train", "--corpus", corpus, "--out", bootstrap)
    assert trained.exit_code == 0, trained.output
    assert bootstrap.exists()

    result = invoke(tiny_config, "selftrain", "--corpus", corpus, "--init", bootstrap, "--run-dir", tmp_path / "run")

    assert result.exit_code == 0, result.output
    run_dir = tmp_path / "run"
    assert all((run_dir / f"model_iter{k}.bin").exists() for k in range(3))
    rows = orjson.loads((run_dir / "report.json").read_bytes())
    assert [row["name"] for row in rows] == ["census-sgm", "bootstrap", "iter1", "iter2"]
    assert (run_dir / "report.txt").read_text().splitlines()[0].startswith("Model")
    events = [orjson.loads(line)["event"] for line in (run_dir / "run_log.jsonl").read_bytes().splitlines()]
    assert events[0] == "config"
    assert events.count("checkpoint") == 2


def test_selftrain_from_random_without_baseline(tiny_config, tmp_path):
    corpus = synth(tiny_config, tmp_path / "corpus")

    result = invoke(
        tiny_config, "selftrain", "--corpus", corpus, "--init", "random", "--run-dir", tmp_path / "run",
        "--iterations", 1, "--no-census-baseline", "--filter-off",
    )

    assert result.exit_code == 0, result.output
    rows = orjson.loads((tmp_path / "run" / "report.json").read_bytes())
    assert [row["name"] for row in rows] == ["random-init", "iter1"]


def test_selftrain_rejects_an_unknown_init(tiny_config, tmp_path):
    corpus = synth(tiny_config, tmp_path / "corpus")

    result = invoke(tiny_config, "selftrain", "--corpus", corpus, "--init", tmp_path / "absent.bin")

    assert result.exit_code == 1


def test_run_maps_errors_to_exit_codes(flat_config, tmp_path):
    checkpoint = tmp_path / "model.bin"
    checkpoint.write_bytes(b"NOPE")
    corpus = synth(flat_config, tmp_path / "corpus")

    assert run(["synth", "--bogus"]) == 1
    assert run(["eval"]) == 1
    assert run(["--config", str(flat_config), "match", "--corpus", str(corpus), "--model", str(checkpoint)]) == 2


def test_sparse_evaluation_keeps_perfect_scores(flat_config, tmp_path):
    corpus = synth(flat_config, tmp_path / "corpus")
    entry = read_manifest(corpus)[0]
    (tmp_path / "pred").mkdir()
    save_pfm(load_reference(entry), disparity_path(tmp_path / "pred", entry.name))

    result = invoke(flat_config, "eval", "--pred", tmp_path / "pred", "--ref", corpus, "--sparse", "--json", tmp_path / "r.json")

    assert result.exit_code == 0, result.output
    (row,) = orjson.loads((tmp_path / "r.json").read_bytes())
    assert row["report"]["n_reference"] == round(0.05 * load_reference(entry).valid.sum())
    assert row["report"]["recall"] == 1.0


def pipeline(config, root):
    corpus = synth(config, root / "corpus", seed=3)
    steps = [
        ("train", "--corpus", corpus, "--out", root / "bootstrap.bin"),
        ("selftrain", "--corpus", corpus, "--init", root / "bootstrap.bin", "--run-dir", root / "run"),
        ("match", "--corpus", corpus, "--model", root / "run" / "model_iter2.bin", "--out", root / "pred", "--no-png"),
        ("eval", "--pred", root / "pred", "--ref", corpus, "--json", root / "report.json"),
    ]
    for step in steps:
        result = invoke(config, *step)
        assert result.exit_code == 0, result.output
    return root


def test_full_pipeline_is_bitwise_reproducible(tiny_config, tmp_path):
    first = pipeline(tiny_config, tmp_path / "one")
    second = pipeline(tiny_config, tmp_path / "two")

    produced = sorted(
        p.relative_to(first) for p in first.rglob("*") if p.suffix in (".bin", ".pfm") or p.name == "report.json"
    )
    assert any(p.suffix == ".bin" for p in produced)
    assert any(p.suffix == ".pfm" for p in produced)
    assert sum(p.name == "report.json" for p in produced) == 2
    for name in produced:
        assert (first / name).read_bytes() == (second / name).read_bytes(), name
