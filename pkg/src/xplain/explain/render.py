"""Rendering styles for attribution results.

Four styles, matched to the producing method:

- ``lime_superpixels``: the retained segments on a white canvas
- ``lime_posneg``: positive segments tinted green, negative red
- ``shap_redblue``: diverging per-segment map, symmetric about zero
- ``cam_overlay``: jet heatmap blended 50/50 with the original

Array composition is pure (tested numerically); files are written as PNG,
and comparison sheets come out of matplotlib.
"""

from __future__ import annotations

import numpy as np
from PIL import Image

import matplotlib

from ..errors import StyleMismatch
from ..imaging import ImageTensor, RangeTag
from .types import AttributionResult

STYLES = ("lime_superpixels", "lime_posneg", "shap_redblue", "cam_overlay")

_METHOD_STYLES = {
    "lime": ("lime_superpixels", "lime_posneg"),
    "kernel_shap": ("shap_redblue",),
    "grad_cam": ("cam_overlay",),
}

_GREEN = np.array([0.0, 0.8, 0.0])
_RED = np.array([0.9, 0.0, 0.0])


def styles_for_method(method: str):
    return _METHOD_STYLES[method]


def _check(result: AttributionResult, style: str, needs_segments: bool):
    if style not in _METHOD_STYLES.get(result.method, ()):
        raise StyleMismatch(f"style {style!r} incompatible with method {result.method!r}")
    if needs_segments and result.segments is None:
        raise StyleMismatch(f"style {style!r} needs the superpixel map on the result")


def _original_hwc(original: ImageTensor) -> np.ndarray:
    if original.range_tag is not RangeTag.UNIT:
        raise StyleMismatch("rendering expects the Unit-range original image")
    return original.data.transpose(1, 2, 0)


def _cmap(name: str):
    return matplotlib.colormaps[name]


def compose_cam_overlay(original_hwc: np.ndarray, cam_map: np.ndarray) -> np.ndarray:
    """0.5 * original + 0.5 * jet(map)."""
    heat = _cmap("jet")(np.clip(cam_map, 0.0, 1.0))[..., :3]
    return 0.5 * original_hwc + 0.5 * heat


def render_array(result: AttributionResult, original: ImageTensor, style: str) -> np.ndarray:
    """Compose one (H, W, 3) float image in [0, 1]."""
    base = _original_hwc(original)
    if style == "cam_overlay":
        _check(result, style, needs_segments=False)
        return compose_cam_overlay(base, result.scores)

    _check(result, style, needs_segments=True)
    labels = result.segments.labels
    seg_scores = result.scores

    if style == "lime_superpixels":
        out = np.ones_like(base)
        keep = (seg_scores != 0.0)[labels]
        out[keep] = base[keep]
        return out

    if style == "lime_posneg":
        out = base.copy()
        pos = (seg_scores > 0.0)[labels]
        neg = (seg_scores < 0.0)[labels]
        out[pos] = 0.5 * base[pos] + 0.5 * _GREEN
        out[neg] = 0.5 * base[neg] + 0.5 * _RED
        return out

    if style == "shap_redblue":
        vmax = np.max(np.abs(seg_scores))
        pixel = seg_scores[labels]
        level = np.full(pixel.shape, 0.5) if vmax == 0 else 0.5 + pixel / (2 * vmax)
        return _cmap("bwr")(level)[..., :3]

    raise StyleMismatch(f"unknown style {style!r}")


def save_png(arr01: np.ndarray, path) -> None:
    data = np.round(np.clip(arr01, 0.0, 1.0) * 255.0).astype(np.uint8)
    Image.fromarray(data).save(path, format="PNG")


def render(result: AttributionResult, original: ImageTensor, style: str, path) -> np.ndarray:
    arr = render_array(result, original, style)
    save_png(arr, path)
    return arr


def comparison_sheet(rows, path, suptitle: str = None):
    """Grid of panels: ``rows`` is a list of (row_title, [(title, hwc array), ...])."""
    import matplotlib.pyplot as plt

    n_rows = len(rows)
    n_cols = max(len(panels) for _, panels in rows)
    fig, axes = plt.subplots(n_rows, n_cols, figsize=(3.2 * n_cols, 3.4 * n_rows),
                             squeeze=False)
    for r, (row_title, panels) in enumerate(rows):
        for c in range(n_cols):
            ax = axes[r][c]
            ax.axis("off")
            if c < len(panels):
                title, img = panels[c]
                ax.imshow(np.clip(img, 0.0, 1.0))
                label = f"{row_title}: {title}" if c == 0 else title
                ax.set_title(label, fontsize=9)
    if suptitle:
        fig.suptitle(suptitle, fontsize=11)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
