import math

import numpy as np
import pytest

from posedistill.errors import ConfigurationError, IntegrityError, NumericError
from posedistill.heatmaps import (
    COCO_JOINTS,
    DEFAULT_GROUPING,
    GROUP_NAMES,
    PghmReader,
    PghmWriter,
    build_heatmap_stack,
    flip_heatmap_stack,
    merge_keypoints,
    normalize_heatmap,
    synthesize_heatmaps,
)

JIDX = {name: i for i, name in enumerate(COCO_JOINTS)}
GIDX = {name: i for i, name in enumerate(GROUP_NAMES)}


def brute_force_merge(raw):
    """Oracle: per-pixel max over member channels, explicit loops."""
    h, w = raw.shape[1:]
    out = np.zeros((len(GROUP_NAMES), h, w))
    for g, group in enumerate(GROUP_NAMES):
        members = [JIDX[j] for j in COCO_JOINTS if DEFAULT_GROUPING[j] == group]
        for r in range(h):
            for c in range(w):
                out[g, r, c] = max(raw[m, r, c] for m in members)
    return out


def test_merge_single_nonzero_channel():
    raw = np.zeros((17, 4, 3))
    raw[JIDX["left_elbow"]] = np.arange(12).reshape(4, 3)
    merged = merge_keypoints(raw)
    np.testing.assert_array_equal(merged[GIDX["left_lower_arm"]], raw[JIDX["left_elbow"]])
    for g, name in enumerate(GROUP_NAMES):
        if name != "left_lower_arm":
            assert not merged[g].any()


def test_merge_all_zero():
    assert not merge_keypoints(np.zeros((17, 2, 2))).any()


def test_merge_matches_bruteforce_max():
    rng = np.random.default_rng(7)
    raw = rng.random((17, 5, 4))
    np.testing.assert_array_equal(merge_keypoints(raw), brute_force_merge(raw))


def test_merge_rejects_unknown_joint():
    grouping = dict(DEFAULT_GROUPING)
    grouping["left_flipper"] = "head"
    with pytest.raises(ConfigurationError):
        merge_keypoints(np.zeros((17, 2, 2)), grouping)


def test_merge_rejects_incomplete_grouping():
    grouping = dict(DEFAULT_GROUPING)
    del grouping["nose"]
    with pytest.raises(ConfigurationError):
        merge_keypoints(np.zeros((17, 2, 2)), grouping)


def test_normalize_uniform_on_zeros():
    np.testing.assert_allclose(normalize_heatmap(np.zeros((2, 2))), np.full((2, 2), 0.25))


def test_normalize_known_values():
    out = normalize_heatmap(np.array([[math.log(2), 0.0, 0.0, 0.0]]))
    np.testing.assert_allclose(out, [[0.4, 0.2, 0.2, 0.2]], atol=1e-12)


def test_normalize_matches_direct_softmax_and_is_monotone():
    rng = np.random.default_rng(11)
    m = rng.normal(size=(8, 4)) * 3
    out = normalize_heatmap(m)
    direct = np.exp(m) / np.exp(m).sum()
    np.testing.assert_allclose(out, direct, rtol=1e-12)
    assert abs(out.sum() - 1.0) < 1e-6
    flat_in, flat_out = m.ravel(), out.ravel()
    for i in range(flat_in.size):
        for j in range(flat_in.size):
            if flat_in[i] < flat_in[j]:
                assert flat_out[i] < flat_out[j]


def test_normalize_handles_extreme_inputs():
    out = normalize_heatmap(np.array([[1e4, 0.0], [-1e4, 5e3]]))
    assert np.isfinite(out).all()
    assert abs(out.sum() - 1.0) < 1e-6


def test_normalize_rejects_non_finite():
    with pytest.raises(NumericError):
        normalize_heatmap(np.array([[np.inf, 0.0]]))


def test_synthesize_peak_at_center():
    joints = np.zeros((17, 3))
    joints[:, 0], joints[:, 1] = 2, 1  # center of a 5x3 grid
    joints[0, 2] = 1.0
    stack = synthesize_heatmaps(joints, sigma=1.0, grid_shape=(5, 3))
    assert stack[0].max() == pytest.approx(1.0)
    assert stack[0][2, 1] == stack[0].max()
    assert not stack[1:].any()  # other joints have zero visibility


def test_synthesize_zero_visibility_is_blank():
    joints = np.zeros((17, 3))
    stack = synthesize_heatmaps(joints, sigma=1.0, grid_shape=(4, 4))
    assert not stack.any()


def test_synthesize_out_of_grid_joint_is_faint():
    sigma = 1.5
    joints = np.zeros((17, 3))
    joints[0] = (-3 * sigma, 1.0, 1.0)  # 3 sigma above the grid
    stack = synthesize_heatmaps(joints, sigma=sigma, grid_shape=(4, 3))
    # oracle: Gaussian tail at the nearest in-grid pixel (0, 1)
    tail = math.exp(-((3 * sigma) ** 2) / (2 * sigma**2))
    assert stack[0].max() == pytest.approx(tail, rel=1e-9)
    assert stack[0].max() < 0.05


def test_synthesize_rejects_bad_sigma():
    with pytest.raises(ConfigurationError):
        synthesize_heatmaps(np.zeros((17, 3)), sigma=0.0, grid_shape=(4, 4))


def test_stack_channels_sum_to_one_and_positive():
    rng = np.random.default_rng(3)
    for _ in range(25):
        raw = rng.random((17, 4, 2))
        stack = build_heatmap_stack(raw)
        np.testing.assert_allclose(stack.sum(axis=(1, 2)), 1.0, atol=1e-6)
        assert (stack > 0).all()


def test_merge_commutes_with_in_group_permutation():
    rng = np.random.default_rng(5)
    raw = rng.random((17, 4, 3))
    swapped = raw.copy()
    a, b = JIDX["left_elbow"], JIDX["left_wrist"]
    swapped[[a, b]] = swapped[[b, a]]
    np.testing.assert_array_equal(
        build_heatmap_stack(raw), build_heatmap_stack(swapped)
    )


def test_flip_swaps_mirror_groups_and_columns():
    rng = np.random.default_rng(9)
    stack = rng.random((8, 4, 3))
    flipped = flip_heatmap_stack(stack)
    np.testing.assert_array_equal(
        flipped[GIDX["left_lower_arm"]], stack[GIDX["right_lower_arm"]][:, ::-1]
    )
    np.testing.assert_array_equal(flipped[GIDX["head"]], stack[GIDX["head"]][:, ::-1])
    np.testing.assert_array_equal(flip_heatmap_stack(flipped), stack)


def test_pghm_round_trip(tmp_path):
    rng = np.random.default_rng(1)
    stacks = {f"img_{i:03d}": rng.random((8, 4, 2)).astype(np.float32) for i in range(5)}
    path = tmp_path / "split.pghm"
    with PghmWriter(path) as writer:
        for image_id, stack in stacks.items():
            writer.write(image_id, stack)
    with PghmReader(path) as reader:
        assert set(reader.ids()) == set(stacks)
        for image_id, stack in stacks.items():
            np.testing.assert_array_equal(reader.read(image_id), stack)


def test_pghm_detects_corruption(tmp_path):
    path = tmp_path / "split.pghm"
    with PghmWriter(path) as writer:
        writer.write("a", np.ones((8, 2, 2), dtype=np.float32))
        writer.write("b", np.ones((8, 2, 2), dtype=np.float32))
    blob = bytearray(path.read_bytes())
    blob[0:4] = b"XXXX"
    path.write_bytes(bytes(blob))
    with PghmReader(path) as reader, pytest.raises(IntegrityError):
        reader.read("a")
