"""Closed-form ridge against an independent gradient-descent oracle."""

import numpy as np
import pytest

from herbage.errors import FormatError
from herbage.ridge import RidgeModel, autolabel, clip_targets, fit, predict


def gd_ridge_oracle(X, y, lam, iters=50000, tol=1e-13):
    """Plain gradient descent on ||Xw - y||^2 + lam ||w||^2.

    Independent of the closed form: only needs the gradient and a safe
    step size (1 / largest curvature eigenvalue).
    """
    A = X.T @ X
    b = X.T @ y
    L = 2.0 * (np.linalg.eigvalsh(A).max() + lam)
    w = np.zeros(X.shape[1])
    for _ in range(iters):
        grad = 2.0 * (A @ w + lam * w - b)
        if np.linalg.norm(grad) < tol:
            break
        w -= grad / L
    return w


def test_hand_derived_single_feature_case():
    # X = (1, 2)^T, y = (1, 2), lam = 1:  w = X'y / (X'X + 1) = 5 / 6
    X = np.array([[1.0], [2.0]])
    y = np.array([1.0, 2.0])
    m = fit(X, y, lam=1.0, standardize=False, fit_intercept=False)
    assert m.weights[0, 0] == pytest.approx(5.0 / 6.0, abs=1e-12)


@pytest.mark.parametrize("lam", [0.01, 1.0, 100.0])
def test_matches_gd_oracle(lam):
    rng = np.random.default_rng(11)
    for _ in range(5):
        X = rng.normal(size=(20, 5))
        y = rng.normal(size=20)
        m = fit(X, y, lam=lam, standardize=False, fit_intercept=False)
        w_ref = gd_ridge_oracle(X, y, lam)
        np.testing.assert_allclose(m.weights[0], w_ref, rtol=1e-6, atol=1e-9)


def test_duplicating_rows_doubles_lambda():
    rng = np.random.default_rng(12)
    X = rng.normal(size=(10, 3))
    y = rng.normal(size=10)
    single = fit(X, y, lam=2.0, standardize=False, fit_intercept=False)
    doubled = fit(
        np.vstack([X, X]), np.concatenate([y, y]), lam=4.0,
        standardize=False, fit_intercept=False,
    )
    np.testing.assert_allclose(single.weights, doubled.weights, rtol=1e-10)


def test_lambda_zero_uses_min_norm_lstsq():
    # rank-deficient: duplicate column; lstsq splits the weight evenly
    X = np.array([[1.0, 1.0], [2.0, 2.0], [3.0, 3.0]])
    y = np.array([2.0, 4.0, 6.0])
    m = fit(X, y, lam=0.0, standardize=False, fit_intercept=False)
    np.testing.assert_allclose(m.weights[0], [1.0, 1.0], atol=1e-10)
    assert m.metadata.get("degenerate") is True
    assert m.metadata["solver"] == "lstsq-min-norm"


def test_exact_affine_recovery_with_intercept():
    rng = np.random.default_rng(13)
    X = rng.normal(size=(30, 2))
    y = 3.0 + 2.0 * X[:, 0] - 0.5 * X[:, 1]
    m = fit(X, y, lam=0.0)
    np.testing.assert_allclose(m.weights[0], [2.0, -0.5], atol=1e-10)
    assert m.intercepts[0] == pytest.approx(3.0, abs=1e-10)
    np.testing.assert_allclose(predict(m, X, clip=False)[:, 0], y, atol=1e-9)


def test_standardization_makes_fit_scale_invariant():
    rng = np.random.default_rng(14)
    X = rng.normal(size=(40, 3))
    y = X @ np.array([1.0, -2.0, 0.5]) + 4.0 + rng.normal(0, 0.1, size=40)
    scale = np.array([100.0, 0.01, 3.0])
    shift = np.array([5.0, -2.0, 0.0])

    m1 = fit(X, y, lam=1.0, standardize=True)
    m2 = fit(X * scale + shift, y, lam=1.0, standardize=True)
    X_test = rng.normal(size=(8, 3))
    p1 = predict(m1, X_test, clip=False)
    p2 = predict(m2, X_test * scale + shift, clip=False)
    np.testing.assert_allclose(p1, p2, rtol=1e-8)


def test_constant_feature_gets_zero_weight():
    rng = np.random.default_rng(15)
    X = np.column_stack([rng.normal(size=20), np.full(20, 7.0)])
    y = 2.0 * X[:, 0] + 1.0
    m = fit(X, y, lam=0.5, standardize=True)
    assert m.weights[0, 1] == 0.0


def test_multi_target_fit_shares_design():
    rng = np.random.default_rng(16)
    X = rng.normal(size=(25, 4))
    W_true = rng.normal(size=(3, 4))
    Y = X @ W_true.T
    m = fit(X, Y, lam=0.0, target_names=["a", "b", "c"])
    assert m.weights.shape == (3, 4)
    np.testing.assert_allclose(m.weights, W_true, atol=1e-8)


def test_input_validation():
    with pytest.raises(ValueError):
        fit(np.zeros((3,)), np.zeros(3))  # 1-D features
    with pytest.raises(ValueError):
        fit(np.zeros((3, 2)), np.zeros(4))  # row mismatch
    with pytest.raises(ValueError):
        fit(np.zeros((3, 2)), np.zeros(3), lam=-1.0)
    with pytest.raises(ValueError):
        fit(np.zeros((3, 2)), np.zeros(3), target_names=["a", "b"])


# ---------------------------------------------------------------------------
# prediction post-processing


def test_clip_targets_ranges():
    names = ["total_mass", "grass_pct"]
    out = clip_targets(np.array([[-5.0, 120.0], [3.0, -1.0]]), names)
    np.testing.assert_allclose(out, [[0.0, 100.0], [3.0, 0.0]])


def test_predict_clips_and_optionally_renormalizes():
    m = RidgeModel(
        weights=np.zeros((3, 1)),
        intercepts=np.array([-10.0, 60.0, 60.0]),
        lam=1.0,
        feature_mode="HL",
        target_names=["total_mass", "g_pct", "c_pct"],
    )
    X = np.zeros((2, 1))
    raw = predict(m, X, clip=False)
    np.testing.assert_allclose(raw[0], [-10.0, 60.0, 60.0])

    clipped = predict(m, X)
    np.testing.assert_allclose(clipped[0], [0.0, 60.0, 60.0])  # pct sum 120 kept

    renorm = predict(m, X, renormalize_pct=True)
    np.testing.assert_allclose(renorm[0], [0.0, 50.0, 50.0])


def test_predict_feature_count_guard():
    m = RidgeModel(
        weights=np.zeros((1, 2)), intercepts=np.zeros(1), lam=0.0,
        feature_mode="HL", target_names=["total_mass"],
    )
    with pytest.raises(ValueError, match="features"):
        predict(m, np.zeros((3, 5)))


# ---------------------------------------------------------------------------
# persistence


def test_model_json_roundtrip(tmp_path):
    rng = np.random.default_rng(17)
    m = fit(
        rng.normal(size=(10, 3)), rng.normal(size=(10, 2)), lam=2.5,
        feature_mode="HL+SL", target_names=["total_mass", "grass_pct"],
    )
    m.metadata["note"] = "x"
    p = tmp_path / "m.json"
    m.save(p)
    back = RidgeModel.load(p)
    np.testing.assert_array_equal(back.weights, m.weights)
    np.testing.assert_array_equal(back.intercepts, m.intercepts)
    np.testing.assert_array_equal(back.feature_mean, m.feature_mean)
    assert back.lam == 2.5
    assert back.feature_mode == "HL+SL"
    assert back.target_names == m.target_names
    assert back.metadata["note"] == "x"
    assert back.content_hash() == m.content_hash()

    with pytest.raises(FormatError):
        RidgeModel.load(tmp_path / "missing.json")


def test_content_hash_tracks_weights(tmp_path):
    rng = np.random.default_rng(18)
    m = fit(rng.normal(size=(10, 2)), rng.normal(size=10), lam=1.0)
    h1 = m.content_hash()
    m.weights[0, 0] += 1.0
    assert m.content_hash() != h1


# ---------------------------------------------------------------------------
# autolabel


def _species_model(n_features=2):
    rng = np.random.default_rng(19)
    X = rng.normal(size=(20, n_features))
    Y = np.column_stack(
        [
            1000 + 100 * X[:, 0],
            np.full(20, 60.0),
            np.full(20, 30.0),
            np.full(20, 10.0),
        ]
    )
    return fit(
        X, Y, lam=1.0,
        target_names=["total_mass", "grass_pct", "clover_pct", "weeds_pct"],
    )


def test_autolabel_builds_valid_table():
    m = _species_model()
    X = np.random.default_rng(20).normal(size=(5, 2))
    table = autolabel(m, X, [f"s{i}" for i in range(5)], ("grass", "clover", "weeds"))
    assert [r.source for r in table.rows] == ["automatic"] * 5
    assert table.provenance["model_hash"] == m.content_hash()
    table.validate()  # constant pcts sum to 100 exactly here


def test_autolabel_rejects_wrong_species_order():
    m = _species_model()
    with pytest.raises(ValueError, match="target"):
        autolabel(m, np.zeros((2, 2)), ["a", "b"], ("clover", "grass", "weeds"))


def test_autolabel_id_count_guard():
    m = _species_model()
    with pytest.raises(ValueError, match="ids"):
        autolabel(m, np.zeros((3, 2)), ["a"], ("grass", "clover", "weeds"))
