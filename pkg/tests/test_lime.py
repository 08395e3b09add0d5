import numpy as np
import pytest

from xplain.errors import DegenerateDesign
from xplain.explain import lime_explain, lime_fit_masks, segment_superpixels
from xplain.explain.lime import (
    fit_surrogate,
    forward_selection,
    proximity_weights,
    sample_masks,
    weighted_ridge,
)
from xplain.explain.perturb import batchify
from xplain.gateway import native_handle, predict_unit, top_class, normalize_unit_batch
from xplain.imaging import ImageTensor, RangeTag
from xplain.nnet import build_desknet
from xplain.rng import substream
from xplain.synthdata import blob_image


class TestPieces:
    def test_first_mask_all_ones(self):
        masks = sample_masks(50, 8, substream(0))
        assert np.all(masks[0] == 1.0)
        assert set(np.unique(masks)) <= {0.0, 1.0}

    def test_proximity_weights(self):
        masks = np.array([[1, 1, 1, 1], [1, 1, 0, 0], [0, 0, 0, 0]], dtype=float)
        w = proximity_weights(masks, kernel_width=0.25)
        assert w[0] == pytest.approx(1.0)  # zero distance
        d_half = 1 - np.sqrt(0.5)
        assert w[1] == pytest.approx(np.exp(-(d_half**2) / 0.0625))
        assert w[2] == pytest.approx(np.exp(-1.0 / 0.0625))
        assert np.all(w >= 0)

    def test_weighted_ridge_matches_sklearn(self):
        # independent check of the standardized weighted ridge solve
        sk = pytest.importorskip("sklearn.linear_model")
        rng = np.random.default_rng(3)
        x = rng.integers(0, 2, (200, 6)).astype(float)
        y = x @ np.array([1.0, -2.0, 0.5, 0.0, 3.0, -0.25]) + 0.7
        w = rng.random(200) + 0.1
        # on an exactly-linear target any consistent ridge with tiny lambda
        # recovers the coefficients; compare against sklearn at the same lambda
        ours_b0, ours_c = weighted_ridge(x, y, w, lam=1e-8)
        ref = sk.Ridge(alpha=1e-8).fit(x, y, sample_weight=w)
        assert np.allclose(ours_c, ref.coef_, atol=1e-5)
        assert ours_b0 == pytest.approx(ref.intercept_, abs=1e-5)

    def test_forward_selection_finds_signal(self):
        rng = np.random.default_rng(4)
        x = rng.integers(0, 2, (300, 10)).astype(float)
        y = 5.0 * x[:, 2] - 3.0 * x[:, 7]
        w = np.ones(300)
        sel = forward_selection(x, y, w, lam=1e-6, k=2)
        assert set(sel) == {2, 7}

    def test_degenerate_design(self):
        masks = np.ones((10, 4))
        with pytest.raises(DegenerateDesign):
            fit_surrogate(masks, np.zeros(10), np.ones(10), 4, 1.0)


class TestMaskOracles:
    def test_linear_oracle_recovery(self):
        s = 8
        oracle = batchify(lambda m: 3.0 * m[2] - 2.0 * m[5] + 0.1)
        intercept, coef, selected, _ = lime_fit_masks(
            oracle, s, num_samples=1000, num_features=10, ridge_lambda=1e-6, seed=0,
        )
        assert coef[2] == pytest.approx(3.0, rel=1e-3)
        assert coef[5] == pytest.approx(-2.0, rel=1e-3)
        others = [coef[i] for i in range(s) if i not in (2, 5)]
        assert np.max(np.abs(others)) < 1e-3
        assert intercept == pytest.approx(0.1, abs=1e-3)

    def test_constant_model(self):
        oracle = batchify(lambda m: 0.25)
        intercept, coef, _, _ = lime_fit_masks(oracle, 6, num_samples=200, seed=1)
        assert np.max(np.abs(coef)) < 1e-9
        assert intercept == pytest.approx(0.25, abs=1e-9)

    def test_selection_caps_nonzero_features(self):
        s = 15
        rng = np.random.default_rng(5)
        true = rng.standard_normal(s)
        oracle = batchify(lambda m: float(true @ m))
        _, coef, selected, _ = lime_fit_masks(oracle, s, num_samples=500,
                                              num_features=4, ridge_lambda=1e-6, seed=2)
        assert np.count_nonzero(coef) <= 4
        assert len(selected) == 4

    def test_num_samples_precondition(self):
        with pytest.raises(ValueError):
            lime_fit_masks(batchify(lambda m: 0.0), 10, num_samples=11)


@pytest.fixture(scope="module")
def blob_scene():
    img = ImageTensor(blob_image(1, 32, substream(0, "img")), RangeTag.UNIT)
    net = build_desknet((3, 32, 32), 4, head_version=0, seed=3)
    handle = native_handle(net, ["q0", "q1", "q2", "q3"])
    sp = segment_superpixels(img, target_segments=16, seed=0)
    return handle, img, sp


class TestImageRoute:
    def test_defaults_recorded(self, blob_scene):
        handle, img, sp = blob_scene
        result = lime_explain(handle, img, sp, seed=0)
        assert result.metadata["num_samples"] == 1000
        assert result.metadata["num_features"] == 10
        assert result.method == "lime"
        assert len(result.scores) == sp.num_segments

    def test_target_is_top_class(self, blob_scene):
        handle, img, sp = blob_scene
        result = lime_explain(handle, img, sp, seed=0)
        expected, _ = top_class(handle, normalize_unit_batch(handle, img.data[None])[0])
        assert result.target_class == expected

    def test_seed_determinism_byte_exact(self, blob_scene):
        handle, img, sp = blob_scene
        a = lime_explain(handle, img, sp, num_samples=300, seed=7)
        b = lime_explain(handle, img, sp, num_samples=300, seed=7)
        assert a.to_json_bytes() == b.to_json_bytes()
        c = lime_explain(handle, img, sp, num_samples=300, seed=8)
        assert a.to_json_bytes() != c.to_json_bytes()

    def test_explicit_target_class(self, blob_scene):
        handle, img, sp = blob_scene
        result = lime_explain(handle, img, sp, num_samples=300, seed=0, target_class=2)
        assert result.target_class == 2
        assert result.metadata["prediction"] == pytest.approx(
            float(predict_unit(handle, img.data[None])[0][2])
        )
