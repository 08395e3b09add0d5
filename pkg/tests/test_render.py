import matplotlib
import numpy as np
import pytest
from PIL import Image

from xplain.errors import StyleMismatch
from xplain.explain import (
    AttributionResult,
    SuperpixelMap,
    compose_cam_overlay,
    comparison_sheet,
    render,
    render_array,
    save_png,
    styles_for_method,
)
from xplain.imaging import ImageTensor, RangeTag
from xplain.rng import substream


def scene(h=12, w=12, num_segments=6):
    rng = substream(0, "render")
    img = ImageTensor(rng.random((3, h, w)) * 0.8, RangeTag.UNIT)
    labels = (np.arange(h)[:, None] // (h // 2) * 3
              + np.arange(w)[None, :] // (w // 3)).astype(np.int32)
    sp = SuperpixelMap(labels=labels, num_segments=num_segments)
    return img, sp


def lime_result(scores, sp):
    return AttributionResult(method="lime", target_class=0, base_value=0.1,
                             scores=scores, segments=sp)


class TestLimeStyles:
    def test_superpixels_only_selected_non_white(self):
        img, sp = scene()
        scores = np.array([0.5, 0.0, -0.2, 0.0, 0.0, 0.9])
        out = render_array(lime_result(scores, sp), img, "lime_superpixels")
        shown = np.isin(sp.labels, [0, 2, 5])
        assert np.allclose(out[~shown], 1.0)
        assert np.array_equal(out[shown], img.data.transpose(1, 2, 0)[shown])

    def test_top_k_segment_count(self):
        img, sp = scene()
        scores = np.array([0.5, 0.0, -0.2, 0.0, 0.0, 0.9])
        out = render_array(lime_result(scores, sp), img, "lime_superpixels")
        non_white = ~np.all(out == 1.0, axis=-1)
        rendered_segments = np.unique(sp.labels[non_white])
        assert len(rendered_segments) == np.count_nonzero(scores)

    def test_posneg_tints(self):
        img, sp = scene()
        scores = np.array([0.5, 0.0, -0.2, 0.0, 0.0, 0.0])
        out = render_array(lime_result(scores, sp), img, "lime_posneg")
        base = img.data.transpose(1, 2, 0)
        pos = sp.labels == 0
        neg = sp.labels == 2
        rest = ~(pos | neg)
        assert np.allclose(out[pos], 0.5 * base[pos] + 0.5 * np.array([0.0, 0.8, 0.0]))
        assert np.allclose(out[neg], 0.5 * base[neg] + 0.5 * np.array([0.9, 0.0, 0.0]))
        assert np.array_equal(out[rest], base[rest])


class TestShapStyle:
    def test_zero_scores_neutral_midpoint(self):
        img, sp = scene()
        result = AttributionResult(method="kernel_shap", target_class=0, base_value=0.2,
                                   scores=np.zeros(6), segments=sp)
        out = render_array(result, img, "shap_redblue")
        mid = matplotlib.colormaps["bwr"](0.5)[:3]
        assert np.allclose(out, np.asarray(mid)[None, None, :])

    def test_symmetric_scale(self):
        img, sp = scene()
        scores = np.array([1.0, -1.0, 0.0, 0.0, 0.0, 0.0])
        result = AttributionResult(method="kernel_shap", target_class=0, base_value=0.0,
                                   scores=scores, segments=sp)
        out = render_array(result, img, "shap_redblue")
        cmap = matplotlib.colormaps["bwr"]
        assert np.allclose(out[sp.labels == 0][0], cmap(1.0)[:3])
        assert np.allclose(out[sp.labels == 1][0], cmap(0.0)[:3])
        assert np.allclose(out[sp.labels == 2][0], cmap(0.5)[:3])


class TestCamStyle:
    def test_zero_map_uniform_tint(self):
        img, _ = scene()
        cam = AttributionResult(method="grad_cam", target_class=1, base_value=0.0,
                                scores=np.zeros((12, 12)))
        out = render_array(cam, img, "cam_overlay")
        base = img.data.transpose(1, 2, 0)
        expected = 0.5 * base + 0.5 * np.asarray(matplotlib.colormaps["jet"](0.0)[:3])
        assert np.allclose(out, expected)

    def test_overlay_formula(self):
        img, _ = scene()
        rng = substream(1, "cam")
        cam_map = rng.random((12, 12))
        cam = AttributionResult(method="grad_cam", target_class=1, base_value=0.0,
                                scores=cam_map)
        out = render_array(cam, img, "cam_overlay")
        assert np.allclose(out, compose_cam_overlay(img.data.transpose(1, 2, 0), cam_map))


class TestFilesAndGuards:
    def test_style_mismatch(self):
        img, sp = scene()
        result = lime_result(np.ones(6), sp)
        with pytest.raises(StyleMismatch):
            render_array(result, img, "cam_overlay")
        cam = AttributionResult(method="grad_cam", target_class=0, base_value=0.0,
                                scores=np.zeros((12, 12)))
        with pytest.raises(StyleMismatch):
            render_array(cam, img, "shap_redblue")

    def test_segments_required(self):
        img, _ = scene()
        result = AttributionResult(method="lime", target_class=0, base_value=0.0,
                                   scores=np.ones(6), segments=None)
        with pytest.raises(StyleMismatch):
            render_array(result, img, "lime_superpixels")

    def test_styles_for_method(self):
        assert styles_for_method("lime") == ("lime_superpixels", "lime_posneg")
        assert styles_for_method("kernel_shap") == ("shap_redblue",)
        assert styles_for_method("grad_cam") == ("cam_overlay",)

    def test_render_writes_png(self, tmp_path):
        img, sp = scene()
        path = tmp_path / "out.png"
        arr = render(lime_result(np.ones(6), sp), img, "lime_posneg", path)
        assert path.exists()
        loaded = np.asarray(Image.open(path))
        assert loaded.shape == (12, 12, 3)
        assert np.allclose(loaded / 255.0, arr, atol=1 / 255)

    def test_save_png_deterministic(self, tmp_path):
        arr = substream(2, "png").random((5, 5, 3))
        save_png(arr, tmp_path / "a.png")
        save_png(arr, tmp_path / "b.png")
        assert (tmp_path / "a.png").read_bytes() == (tmp_path / "b.png").read_bytes()

    def test_comparison_sheet(self, tmp_path):
        img, sp = scene()
        base = img.data.transpose(1, 2, 0)
        rows = [
            ("LIME", [("superpixels", base), ("pos/neg", base)]),
            ("SHAP", [("original", base), ("attribution", base)]),
            ("Grad-CAM", [("original", base), ("overlay", base)]),
        ]
        path = tmp_path / "sheet.png"
        comparison_sheet(rows, path, suptitle="demo")
        assert path.exists() and path.stat().st_size > 0
