import numpy as np
import pytest

from app.exceptions import DataError
from app.function.consistency import lr_check, survivor_stats
from app.function.synthgen import generate_scene
from app.models import DisparityMap
from app.schemas import ConsistencyConfig

from .conftest import small_spec


def reference_check(d_l: np.ndarray, d_r: np.ndarray) -> np.ndarray:
    """Pixel-by-pixel mutual agreement of integer maps."""
    height, width = d_l.shape
    valid = np.zeros(d_l.shape, dtype=bool)
    for y in range(height):
        for x in range(width):
            match = x - int(d_l[y, x])
            valid[y, x] = 0 <= match < width and d_r[y, match] == d_l[y, x]
    return valid


def test_constant_maps_keep_every_matchable_pixel():
    d = DisparityMap.dense(np.full((3, 10), 4.0))

    filtered = lr_check(d, d)

    np.testing.assert_array_equal(filtered.valid[:, :4], False)
    np.testing.assert_array_equal(filtered.valid[:, 4:], True)
    np.testing.assert_array_equal(filtered.disparity, d.disparity)


def test_agreeing_pixel_survives_and_disagreeing_one_does_not():
    d_l = np.zeros((1, 12))
    d_r = np.zeros((1, 12))
    d_l[0, 8] = 5.0
    d_r[0, 3] = 5.0
    d_l[0, 9] = 5.0
    d_r[0, 4] = 2.0

    valid = lr_check(DisparityMap.dense(d_l), DisparityMap.dense(d_r)).valid

    assert valid[0, 8]
    assert not valid[0, 9]


def test_invalid_partner_rejects_the_pixel():
    d = np.full((1, 6), 1.0)
    right_valid = np.ones((1, 6), dtype=bool)
    right_valid[0, 2] = False

    valid = lr_check(DisparityMap.dense(d), DisparityMap(d, right_valid)).valid

    assert not valid[0, 3]
    assert valid[0, 4]


def test_invalid_left_pixels_stay_invalid():
    d = np.zeros((2, 5))
    left_valid = np.ones((2, 5), dtype=bool)
    left_valid[1, 1] = False

    valid = lr_check(DisparityMap(d, left_valid), DisparityMap.dense(d)).valid

    np.testing.assert_array_equal(valid, left_valid)


def test_fractional_match_rounds_to_nearest():
    d_l = np.zeros((1, 8))
    d_l[0, 5] = 2.5
    d_r = np.full((1, 8), 9.0)
    d_r[0, 3] = 2.6

    valid = lr_check(DisparityMap.dense(d_l), DisparityMap.dense(d_r), ConsistencyConfig(epsilon=0.5)).valid

    assert valid[0, 5]


@pytest.mark.parametrize("seed", range(4))
def test_ground_truth_passes_exactly_where_visible(seed):
    scene = generate_scene(small_spec(n_rectangles=3), seed)
    dense_left = DisparityMap.dense(scene.gt_disparity_left.disparity)
    dense_right = DisparityMap.dense(scene.gt_disparity_right.disparity)

    filtered = lr_check(dense_left, dense_right)

    np.testing.assert_array_equal(filtered.valid, ~scene.occlusion_left)


@pytest.mark.parametrize("seed", range(5))
def test_matches_the_pixel_loop_for_integer_maps(seed):
    rng = np.random.default_rng(seed)
    d_l = rng.integers(0, 4, (5, 9)).astype(float)
    d_r = rng.integers(0, 4, (5, 9)).astype(float)

    filtered = lr_check(DisparityMap.dense(d_l), DisparityMap.dense(d_r), ConsistencyConfig(epsilon=0.9))

    np.testing.assert_array_equal(filtered.valid, reference_check(d_l, d_r))


def test_larger_tolerance_keeps_more_pixels(rng):
    d_l = DisparityMap.dense(rng.random((6, 20)) * 5)
    d_r = DisparityMap.dense(rng.random((6, 20)) * 5)

    counts = [lr_check(d_l, d_r, ConsistencyConfig(epsilon=e)).valid.sum() for e in (0.25, 0.5, 1.0, 2.0, 10.0)]

    assert counts == sorted(counts)


def test_filtering_twice_changes_nothing(rng):
    d_l = DisparityMap.dense(rng.integers(0, 4, (6, 12)).astype(float))
    d_r = DisparityMap.dense(rng.integers(0, 4, (6, 12)).astype(float))

    once = lr_check(d_l, d_r)
    twice = lr_check(once, d_r)

    np.testing.assert_array_equal(once.valid, twice.valid)


def test_size_mismatch():
    with pytest.raises(DataError, match="differ in size"):
        lr_check(DisparityMap.dense(np.zeros((2, 3))), DisparityMap.dense(np.zeros((2, 4))))


def test_survivor_stats():
    valid = np.zeros((2, 4), dtype=bool)
    valid[0] = True

    assert survivor_stats(DisparityMap(np.zeros((2, 4)), valid)) == (0.5, 4)
    assert survivor_stats(DisparityMap(np.zeros((0, 0)), np.zeros((0, 0), dtype=bool))) == (0.0, 0)
