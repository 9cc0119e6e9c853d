import numpy as np
import pytest

from herbage.errors import ConfigError, FormatError
from herbage.protoseg import DEFAULT_TEMPERATURE, PrototypeModel, fit_prototypes, segment


def _two_tone_scene():
    """Left half class 0 at RGB 10, right half class 1 at RGB 250."""
    rgb = np.zeros((4, 6, 3), np.uint8)
    rgb[:, :3] = 10
    rgb[:, 3:] = 250
    labels = np.zeros((4, 6), np.uint8)
    labels[:, 3:] = 1
    return rgb, labels


def test_fit_prototypes_exact_means():
    rgb, labels = _two_tone_scene()
    model = fit_prototypes([(rgb, labels)], n_classes=2)
    np.testing.assert_allclose(model.prototypes, [[10, 10, 10], [250, 250, 250]])
    assert model.temperature == DEFAULT_TEMPERATURE


def test_fit_prototypes_pools_across_scenes():
    rgb1 = np.full((2, 2, 3), 10, np.uint8)
    rgb2 = np.full((2, 2, 3), 30, np.uint8)
    labels = np.zeros((2, 2), np.uint8)
    model = fit_prototypes([(rgb1, labels), (rgb2, labels)], n_classes=1)
    np.testing.assert_allclose(model.prototypes, [[20, 20, 20]])


def test_fit_prototypes_missing_class():
    rgb = np.zeros((2, 2, 3), np.uint8)
    labels = np.zeros((2, 2), np.uint8)
    with pytest.raises(ConfigError, match="class"):
        fit_prototypes([(rgb, labels)], n_classes=3)


def test_fit_prototypes_label_out_of_range():
    rgb = np.zeros((2, 2, 3), np.uint8)
    labels = np.full((2, 2), 5, np.uint8)
    with pytest.raises(ConfigError, match="out of range"):
        fit_prototypes([(rgb, labels)], n_classes=2)


def test_segment_scores_sum_to_one():
    rgb, labels = _two_tone_scene()
    model = fit_prototypes([(rgb, labels)], n_classes=2)
    scores = segment(rgb, model)
    assert scores.shape == (2, 4, 6)
    assert scores.dtype == np.float32
    np.testing.assert_allclose(scores.sum(axis=0), 1.0, atol=1e-6)


def test_segment_argmax_is_nearest_prototype():
    rgb, labels = _two_tone_scene()
    model = fit_prototypes([(rgb, labels)], n_classes=2)
    scores = segment(rgb, model)
    assert np.array_equal(np.argmax(scores, axis=0), labels)


def test_equidistant_pixel_scores_half():
    model = PrototypeModel(prototypes=np.array([[0.0, 0.0, 0.0], [200.0, 200.0, 200.0]]))
    mid = np.full((1, 1, 3), 100, np.uint8)
    scores = segment(mid, model)
    np.testing.assert_allclose(scores[:, 0, 0], [0.5, 0.5], atol=1e-6)


def test_temperature_sharpens_scores():
    protos = np.array([[0.0, 0.0, 0.0], [200.0, 200.0, 200.0]])
    img = np.full((1, 1, 3), 60, np.uint8)
    cool = segment(img, PrototypeModel(prototypes=protos, temperature=100.0))
    sharp = segment(img, PrototypeModel(prototypes=protos, temperature=5.0))
    # lower temperature concentrates mass on the nearest prototype
    assert sharp[0, 0, 0] > cool[0, 0, 0]
    assert sharp[0, 0, 0] > 0.99


def test_model_json_roundtrip(tmp_path):
    model = PrototypeModel(
        prototypes=np.array([[1.5, 2.0, 3.0], [4.0, 5.0, 6.0]]), temperature=30.0
    )
    p = tmp_path / "m.json"
    model.save(p)
    back = PrototypeModel.load(p)
    np.testing.assert_array_equal(back.prototypes, model.prototypes)
    assert back.temperature == 30.0

    with pytest.raises(FormatError):
        PrototypeModel.load(tmp_path / "missing.json")


def test_model_validation():
    with pytest.raises(ValueError):
        PrototypeModel(prototypes=np.zeros((2, 2)))  # needs (C, 3)
    with pytest.raises(ConfigError):
        PrototypeModel(prototypes=np.zeros((2, 3)), temperature=0.0)


def test_segment_on_generated_scene(tiny_scenes, irish):
    model = fit_prototypes(tiny_scenes, len(irish))
    scores = segment(tiny_scenes[0].rgb, model)
    assert scores.shape[0] == len(irish)
    np.testing.assert_allclose(scores.sum(axis=0), 1.0, atol=1e-5)
