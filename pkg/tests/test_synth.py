"""Scene composition: transforms, paste semantics, height statistics."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from herbage.assets import SampleAsset
from herbage.errors import ConfigError, TransformDegenerateError
from herbage.synth import (
    GenConfig,
    HeightNormalizer,
    SyntheticScene,
    apply_sample_transform,
    draw_category,
    draw_species_probs,
    fit_height_normalizer,
    generate_scene,
    height_histogram,
    merge_histograms,
    normalize_height,
    normalizer_from_counts,
    paste,
    percentile_from_counts,
    transform_sample,
)


def _blank_scene(h=20, w=20):
    return SyntheticScene(
        rgb=np.full((h, w, 3), 10, np.uint8),
        labels=np.zeros((h, w), np.uint8),
        raw_height=np.zeros((h, w), np.int32),
    )


def _sample(alpha_value=255, size=4, species=2, rgb_value=200):
    return SampleAsset(
        id="s",
        species=species,
        rgb=np.full((size, size, 3), rgb_value, np.uint8),
        alpha=np.full((size, size), alpha_value, np.uint8),
    )


# ---------------------------------------------------------------------------
# config


def test_genconfig_defaults_are_valid():
    GenConfig().validate()


@pytest.mark.parametrize(
    "kwargs",
    [
        {"canvas_size": (0, 10)},
        {"paste_count_range": (0, 5)},
        {"paste_count_range": (8, 5)},
        {"dirichlet_alpha": (1.0, 0.0)},
        {"dirichlet_alpha": ()},
        {"rotation_range": -1.0},
        {"blur_radius_range": (3.0, 1.0)},
        {"brightness_range": (-0.1, 1.0)},
        {"n_images": -1},
    ],
)
def test_genconfig_rejects(kwargs):
    with pytest.raises(ConfigError):
        GenConfig(**kwargs).validate()


# ---------------------------------------------------------------------------
# random draws


def test_species_probs_sum_to_one(rng):
    p = draw_species_probs((9.0, 2.0, 1.0), rng)
    assert p.shape == (3,)
    assert np.all(p >= 0)
    assert abs(p.sum() - 1.0) < 1e-12


def test_species_probs_mean_matches_alpha():
    # E[p] = alpha / sum(alpha) = (0.75, 1/6, 1/12) for (9, 2, 1)
    rng = np.random.default_rng(1)
    draws = np.array([draw_species_probs((9.0, 2.0, 1.0), rng) for _ in range(4000)])
    np.testing.assert_allclose(draws.mean(axis=0), [0.75, 1 / 6, 1 / 12], atol=0.01)


@settings(max_examples=50, deadline=None)
@given(
    alpha=st.lists(st.floats(0.1, 50), min_size=1, max_size=6),
    seed=st.integers(0, 2**16),
)
def test_species_probs_property(alpha, seed):
    p = draw_species_probs(alpha, np.random.default_rng(seed))
    assert p.shape == (len(alpha),)
    assert np.all(p >= 0)
    assert abs(p.sum() - 1.0) < 1e-9


def test_species_probs_rejects_bad_alpha(rng):
    with pytest.raises(ValueError):
        draw_species_probs((1.0, -1.0), rng)
    with pytest.raises(ValueError):
        draw_species_probs((), rng)


def test_draw_category_frequencies():
    p = np.array([0.2, 0.3, 0.5])
    rng = np.random.default_rng(2)
    draws = np.bincount([draw_category(p, rng) for _ in range(20000)], minlength=3)
    np.testing.assert_allclose(draws / 20000, p, atol=0.015)


def test_draw_category_degenerate():
    rng = np.random.default_rng(0)
    assert all(draw_category(np.array([0.0, 1.0, 0.0]), rng) == 1 for _ in range(50))


# ---------------------------------------------------------------------------
# transforms


def test_identity_transform_is_bit_identical():
    s = _sample()
    out = apply_sample_transform(s, 0.0, 0.0, 1.0, 1.0)
    assert np.array_equal(out.rgb, s.rgb)
    assert np.array_equal(out.alpha, s.alpha)
    assert out.species == s.species


def test_rotation_90_exact():
    rng = np.random.default_rng(3)
    s = SampleAsset(
        "r", 1,
        rng.integers(0, 256, (5, 8, 3), dtype=np.uint8),
        rng.integers(128, 256, (5, 8), dtype=np.uint8),
    )
    out = apply_sample_transform(s, 90.0, 0.0, 1.0, 1.0)
    assert np.array_equal(out.rgb, np.rot90(s.rgb))
    assert np.array_equal(out.alpha, np.rot90(s.alpha))


def test_rotation_expands_bounding_box():
    s = _sample(size=10)
    out = apply_sample_transform(s, 45.0, 0.0, 1.0, 1.0)
    assert out.alpha.shape[0] > 10 and out.alpha.shape[1] > 10


def test_brightness_scales_rgb_only():
    s = _sample(rgb_value=100, alpha_value=200)
    out = apply_sample_transform(s, 0.0, 0.0, 0.6, 1.0)
    assert np.all(out.rgb == 60)  # rint(100 * 0.6)
    assert np.array_equal(out.alpha, s.alpha)


def test_resize_scales_dimensions():
    s = _sample(size=6)
    up = apply_sample_transform(s, 0.0, 0.0, 1.0, 1.5)
    assert up.alpha.shape == (9, 9)
    down = apply_sample_transform(s, 0.0, 0.0, 1.0, 0.5)
    assert down.alpha.shape == (3, 3)


def test_resize_collapse_raises():
    s = _sample(size=3)
    with pytest.raises(TransformDegenerateError):
        apply_sample_transform(s, 0.0, 0.0, 1.0, 0.05)


def test_blur_touches_rgb_and_alpha():
    s = SampleAsset(
        "b", 1,
        np.zeros((9, 9, 3), np.uint8),
        np.zeros((9, 9), np.uint8),
    )
    s.rgb[4, 4] = 255
    s.alpha[4, 4] = 255
    out = apply_sample_transform(s, 0.0, 2.0, 1.0, 1.0)
    assert out.rgb[4, 4, 0] < 255  # spread out
    assert out.alpha[4, 4] < 255
    assert out.alpha[3, 4] > 0


def test_transform_sample_deterministic(demo_lib, tiny_cfg):
    s = demo_lib.samples_for(1)[0]
    a = transform_sample(s, tiny_cfg, np.random.default_rng(5))
    b = transform_sample(s, tiny_cfg, np.random.default_rng(5))
    assert np.array_equal(a.rgb, b.rgb)
    assert np.array_equal(a.alpha, b.alpha)


def test_transform_sample_collapsed_ranges_is_identity(demo_lib):
    cfg = GenConfig(
        rotation_range=0.0,
        blur_radius_range=(0.0, 0.0),
        brightness_range=(1.0, 1.0),
        resize_range=(1.0, 1.0),
    )
    s = demo_lib.samples_for(2)[0]
    out = transform_sample(s, cfg, np.random.default_rng(0))
    assert np.array_equal(out.rgb, s.rgb)
    assert np.array_equal(out.alpha, s.alpha)


# ---------------------------------------------------------------------------
# paste semantics


def test_paste_hard_replaces_rgb():
    scene = _blank_scene()
    paste(scene, _sample(alpha_value=255), (10, 10))
    assert np.all(scene.rgb[8:12, 8:12] == 200)
    assert np.all(scene.labels[8:12, 8:12] == 2)
    assert np.all(scene.raw_height[8:12, 8:12] == 1)
    # outside the pasted square nothing moved
    assert scene.labels.sum() == 2 * 16
    assert scene.raw_height.sum() == 16


def test_paste_soft_blends_rgb():
    scene = _blank_scene()
    paste(scene, _sample(alpha_value=200), (10, 10))
    w = 200.0 / 255.0
    expected = round(w * 200 + (1 - w) * 10)
    assert np.all(scene.rgb[8:12, 8:12] == expected)
    # labels and height react the same as a hard paste
    assert np.all(scene.labels[8:12, 8:12] == 2)
    assert np.all(scene.raw_height[8:12, 8:12] == 1)


def test_paste_below_threshold_is_invisible():
    scene = _blank_scene()
    before = scene.rgb.copy()
    paste(scene, _sample(alpha_value=127), (10, 10))
    assert np.array_equal(scene.rgb, before)
    assert scene.labels.sum() == 0
    assert scene.raw_height.sum() == 0
    # one step over the threshold becomes visible
    paste(scene, _sample(alpha_value=128), (10, 10))
    assert scene.labels.sum() > 0


def test_paste_clips_at_borders():
    scene = _blank_scene(h=20, w=20)
    paste(scene, _sample(size=6), (0, 0))  # top-left corner, mostly off-canvas
    assert scene.raw_height.sum() == 9  # only the 3x3 on-canvas quadrant
    paste(scene, _sample(size=6), (100, 100))  # fully off-canvas: no-op
    assert scene.raw_height.sum() == 9


def test_paste_height_accumulates_and_labels_overwrite():
    scene = _blank_scene()
    paste(scene, _sample(species=1), (10, 10))
    paste(scene, _sample(species=3), (10, 10))
    assert np.all(scene.labels[8:12, 8:12] == 3)  # last paste wins
    assert np.all(scene.raw_height[8:12, 8:12] == 2)  # height counts both


def test_paste_mixed_alpha_mask():
    scene = _blank_scene()
    s = _sample(alpha_value=255, size=4)
    s.alpha[0, :] = 0  # one transparent row
    paste(scene, s, (10, 10))
    assert scene.raw_height.sum() == 12


# ---------------------------------------------------------------------------
# scene generation


def test_generate_scene_shapes_and_dtypes(demo_lib, tiny_cfg, tiny_scenes):
    scene = tiny_scenes[0]
    w, h = tiny_cfg.canvas_size
    assert scene.rgb.shape == (h, w, 3) and scene.rgb.dtype == np.uint8
    assert scene.labels.shape == (h, w) and scene.labels.dtype == np.uint8
    assert scene.raw_height.shape == (h, w) and scene.raw_height.dtype == np.int32
    scene.validate()


def test_generate_scene_label_height_consistency(tiny_scenes):
    for scene in tiny_scenes:
        # a pixel has vegetation iff something was pasted on it
        assert np.array_equal(scene.labels > 0, scene.raw_height > 0)
        assert scene.labels.max() <= 3


def test_generate_scene_deterministic(demo_lib, tiny_cfg):
    a = generate_scene(demo_lib, tiny_cfg, 2)
    b = generate_scene(demo_lib, tiny_cfg, 2)
    assert np.array_equal(a.rgb, b.rgb)
    assert np.array_equal(a.labels, b.labels)
    assert np.array_equal(a.raw_height, b.raw_height)


def test_generate_scene_index_changes_content(tiny_scenes):
    assert not np.array_equal(tiny_scenes[0].labels, tiny_scenes[1].labels)


def test_generate_scene_resizes_background(demo_lib):
    cfg = GenConfig(canvas_size=(64, 48), n_images=1, paste_count_range=(5, 10))
    scene = generate_scene(demo_lib, cfg, 0)  # demo backgrounds are 96x96
    assert scene.rgb.shape == (48, 64, 3)


def test_generate_scene_alpha_count_mismatch(demo_lib):
    cfg = GenConfig(dirichlet_alpha=(9.0, 2.0), paste_count_range=(5, 10))
    with pytest.raises(ConfigError, match="dirichlet_alpha"):
        generate_scene(demo_lib, cfg, 0)


# ---------------------------------------------------------------------------
# height statistics


def test_height_histogram_counts():
    raw = np.array([[0, 0, 1], [2, 1, 0]])
    assert np.array_equal(height_histogram(raw), [3, 2, 1])
    with pytest.raises(ValueError):
        height_histogram(np.array([-1]))


def test_merge_histograms_pads():
    merged = merge_histograms([np.array([1, 2]), np.array([0, 1, 5])])
    assert np.array_equal(merged, [1, 3, 5])
    with pytest.raises(ValueError):
        merge_histograms([])


@settings(max_examples=50, deadline=None)
@given(
    values=st.lists(st.integers(0, 40), min_size=1, max_size=400),
    q=st.sampled_from([0.0, 25.0, 50.0, 75.0, 100.0]),
)
def test_percentile_matches_numpy_oracle(values, q):
    arr = np.array(values)
    ours = percentile_from_counts(height_histogram(arr), q)
    ref = float(np.percentile(arr, q))  # default linear interpolation
    assert ours == pytest.approx(ref, abs=1e-9)


def test_percentile_worked_example():
    # values {0, 0, 1, 2}: position 0.75 * 3 = 2.25 -> 1 + 0.25 * (2 - 1)
    counts = height_histogram(np.array([0, 0, 1, 2]))
    assert percentile_from_counts(counts, 75.0) == pytest.approx(1.25)


def test_percentile_empty_rejected():
    with pytest.raises(ValueError):
        percentile_from_counts(np.zeros(5, dtype=int), 75.0)


@settings(max_examples=30, deadline=None)
@given(
    chunks=st.lists(
        st.lists(st.integers(0, 30), min_size=1, max_size=60), min_size=2, max_size=6
    )
)
def test_merge_is_associative_with_pooling(chunks):
    # merging per-chunk histograms == histogram of the pooled values
    pooled = np.concatenate([np.array(c) for c in chunks])
    merged = merge_histograms([height_histogram(np.array(c)) for c in chunks])
    direct = height_histogram(pooled)
    assert np.array_equal(merged[: direct.size], direct)
    assert merged[direct.size :].sum() == 0


def test_fit_normalizer_floor_and_scenes(tiny_scenes):
    # all-zero heights floor the clip at 1
    norm = fit_height_normalizer([np.zeros((5, 5), np.int32)])
    assert norm.clip_value == 1.0

    norm2 = fit_height_normalizer(tiny_scenes)
    pooled = np.concatenate([s.raw_height.ravel() for s in tiny_scenes])
    expected = max(1.0, float(np.percentile(pooled, 75)))
    assert norm2.clip_value == pytest.approx(expected)

    # raw arrays and scene objects are interchangeable
    norm3 = fit_height_normalizer([s.raw_height for s in tiny_scenes])
    assert norm3.clip_value == norm2.clip_value


def test_normalizer_from_counts_matches_fit(tiny_scenes):
    merged = merge_histograms([height_histogram(s.raw_height) for s in tiny_scenes])
    assert (
        normalizer_from_counts(merged).clip_value
        == fit_height_normalizer(tiny_scenes).clip_value
    )


def test_normalize_height_contract():
    norm = HeightNormalizer(clip_value=4.0)
    out = normalize_height(np.array([[0, 2, 4, 8]]), norm)
    assert out.dtype == np.float32
    np.testing.assert_allclose(out, [[0.0, 0.5, 1.0, 1.0]])

    # with clip 1 the map is the identity on already-normalized data
    unit = HeightNormalizer(clip_value=1.0)
    vals = np.array([[0.0, 0.25, 1.0]], dtype=np.float32)
    assert np.array_equal(normalize_height(vals, unit), vals)

    with pytest.raises(ValueError):
        normalize_height(np.ones((2, 2)), HeightNormalizer(clip_value=0.5))
