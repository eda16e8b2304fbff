import numpy as np
import pytest
from pydantic import ValidationError

from app.exceptions import DataError
from app.function.synthgen import generate_corpus, generate_scene
from app.schemas import CorpusSpec, DomainShift
from app.store import MANIFEST, load_corpus, load_corpus_spec, read_manifest
from app.tools import derive_seed

from .conftest import flat_spec, small_spec


def test_flat_zero_plane_gives_identical_views():
    scene = generate_scene(flat_spec(width=32, ground_range=(0, 0)), seed=3)

    np.testing.assert_array_equal(scene.pair.left.data, scene.pair.right.data)
    np.testing.assert_array_equal(scene.gt_disparity_left.disparity, 0.0)
    assert not scene.occlusion_left.any()
    assert not scene.occlusion_right.any()


def test_constant_plane_is_a_pure_shift(flat_scene):
    left = flat_scene.pair.left.data
    right = flat_scene.pair.right.data

    np.testing.assert_array_equal(left[:, 3:], right[:, :-3])
    np.testing.assert_array_equal(flat_scene.occlusion_left[:, :3], True)
    assert not flat_scene.occlusion_left[:, 3:].any()


def test_rectangle_occludes_a_band_of_its_disparity_jump():
    spec = CorpusSpec(
        n_pairs=1,
        width=64,
        height=32,
        d_max=8,
        noise_sigma=0.0,
        n_rectangles=1,
        ground_range=(0, 0),
        rect_range=(5, 5),
        slanted_fraction=0.0,
    )

    for seed in range(5):
        scene = generate_scene(spec, seed)
        rect_rows = (scene.gt_disparity_left.disparity == 5).any(axis=1)
        occluded = scene.occlusion_left.sum(axis=1)

        assert rect_rows.any()
        np.testing.assert_array_equal(occluded[rect_rows], 5)
        np.testing.assert_array_equal(occluded[~rect_rows], 0)


def test_same_seed_same_scene():
    a = generate_scene(small_spec(), seed=11)
    b = generate_scene(small_spec(), seed=11)
    c = generate_scene(small_spec(), seed=12)

    np.testing.assert_array_equal(a.pair.left.data, b.pair.left.data)
    np.testing.assert_array_equal(a.gt_disparity_left.disparity, b.gt_disparity_left.disparity)
    assert not np.array_equal(a.pair.left.data, c.pair.left.data)


@pytest.mark.parametrize("seed", range(4))
def test_ground_truth_views_are_mutually_consistent(seed):
    scene = generate_scene(small_spec(n_rectangles=3, channels=3), seed)
    d_left = scene.gt_disparity_left.disparity.astype(int)
    d_right = scene.gt_disparity_right.disparity.astype(int)

    for y, x in zip(*np.nonzero(~scene.occlusion_left)):
        assert d_right[y, x - d_left[y, x]] == d_left[y, x]
        assert not scene.occlusion_right[y, x - d_left[y, x]]
    for y, x in zip(*np.nonzero(~scene.occlusion_right)):
        assert d_left[y, x + d_right[y, x]] == d_right[y, x]


def test_occlusions_appear_where_surfaces_differ():
    scenes = generate_corpus(small_spec(n_pairs=4, n_rectangles=1), seed=1)

    for scene in scenes:
        assert scene.gt_disparity_left.disparity.max() >= 3
        assert scene.gt_disparity_left.disparity.max() < 8
        assert scene.occlusion_left.any()
        assert scene.occlusion_right.any()


def test_noise_boost_triples_the_noise():
    spec = flat_spec(width=128, height=64, ground_range=(0, 0), noise_sigma=0.02)
    plain = generate_scene(spec, seed=2).pair
    boosted = generate_scene(spec.model_copy(update={"domain_shift": DomainShift.noise_boost}), seed=2).pair

    ratio = np.std(boosted.left.data - boosted.right.data) / np.std(plain.left.data - plain.right.data)

    assert 2.5 < ratio < 3.3


def test_contrast_shift_compresses_intensities():
    scene = generate_scene(flat_spec(domain_shift=DomainShift.contrast_shift), seed=4)

    assert scene.pair.left.data.min() >= 0.25
    assert scene.pair.left.data.max() <= 0.75


def test_channel_swap_reverses_colour_order():
    spec = flat_spec(channels=3)
    plain = generate_scene(spec, seed=6).pair.left.data
    swapped = generate_scene(spec.model_copy(update={"domain_shift": DomainShift.channel_swap}), seed=6).pair.left.data

    np.testing.assert_array_equal(swapped, plain[:, :, ::-1])


def test_disparity_range_must_fit_width():
    with pytest.raises(ValidationError, match="smaller than width"):
        CorpusSpec(width=16, d_max=16)


def test_rectangle_range_must_fit_disparity_range():
    with pytest.raises(ValidationError):
        CorpusSpec(width=64, d_max=8, rect_range=(4, 9))


def test_empty_corpus_writes_valid_manifest(tmp_path):
    scenes = generate_corpus(small_spec(n_pairs=0), seed=0, out_dir=tmp_path)

    assert scenes == []
    assert (tmp_path / MANIFEST).exists()
    assert read_manifest(tmp_path) == []
    assert load_corpus(tmp_path) == []


def test_written_corpus_loads_back(tmp_path):
    spec = small_spec(n_pairs=2, noise_sigma=0.0)
    scenes = generate_corpus(spec, seed=9, out_dir=tmp_path / "nested" / "corpus")
    root = tmp_path / "nested" / "corpus"

    entries = read_manifest(root)
    corpus = load_corpus(root, jobs=2)

    assert [entry.name for entry in entries] == ["scene_0000", "scene_0001"]
    assert [entry.seed for entry in entries] == [scene.rng_seed for scene in scenes]
    assert load_corpus_spec(root) == spec
    for loaded, scene in zip(corpus, scenes):
        np.testing.assert_allclose(loaded.pair.left.data, scene.pair.left.data, atol=0.5 / 255)
        np.testing.assert_array_equal(loaded.reference.valid, scene.gt_disparity_left.valid)
        np.testing.assert_array_equal(
            loaded.reference.disparity[loaded.reference.valid],
            scene.gt_disparity_left.disparity[scene.gt_disparity_left.valid],
        )


def test_half_resolution_corpus(tmp_path):
    generate_corpus(small_spec(n_pairs=1), seed=9, out_dir=tmp_path)

    (loaded,) = load_corpus(tmp_path, half_resolution=True)

    assert loaded.pair.shape == (12, 24)
    assert loaded.reference.shape == (12, 24)


def test_manifest_with_wrong_field_count(tmp_path):
    (tmp_path / MANIFEST).write_text("0\t1\tleft.png\n")

    with pytest.raises(DataError, match="expected 4 or 8"):
        read_manifest(tmp_path)


def test_missing_manifest(tmp_path):
    with pytest.raises(DataError, match="unreadable manifest"):
        read_manifest(tmp_path)


def test_scene_seeds_depend_only_on_corpus_seed_and_index():
    spec = small_spec(n_pairs=3)

    scenes = generate_corpus(spec, seed=5)

    assert [scene.rng_seed for scene in scenes] == [derive_seed(5, index) for index in range(3)]
    np.testing.assert_array_equal(scenes[2].pair.left.data, generate_scene(spec, derive_seed(5, 2)).pair.left.data)
