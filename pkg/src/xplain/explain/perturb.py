"""Shared superpixel-perturbation machinery for LIME and Kernel SHAP.

Toggled-off segments are replaced by the per-segment mean colour of the
original image (a fixed gray is available as an alternative filler). The
same filler image doubles as the Kernel SHAP background reference.
"""

from __future__ import annotations

import numpy as np

from ..gateway import ModelHandle, predict_unit
from ..imaging import ImageTensor, RangeTag
from ..errors import RangeTagMismatch
from .superpixels import SuperpixelMap


def require_unit(img: ImageTensor):
    if img.range_tag is not RangeTag.UNIT:
        raise RangeTagMismatch("perturbation operates on Unit-range images")


def segment_mean_image(img: ImageTensor, sp: SuperpixelMap) -> np.ndarray:
    """(3, H, W) image where every segment holds its mean colour."""
    require_unit(img)
    flat_labels = sp.labels.ravel()
    counts = np.bincount(flat_labels, minlength=sp.num_segments)
    out = np.empty_like(img.data)
    for ch in range(3):
        sums = np.bincount(flat_labels, weights=img.data[ch].ravel(),
                           minlength=sp.num_segments)
        out[ch] = (sums / counts)[sp.labels]
    return out


def gray_image(img: ImageTensor, level: float = 0.5) -> np.ndarray:
    return np.full_like(img.data, level)


def masked_batch(img_data: np.ndarray, labels: np.ndarray, filler: np.ndarray,
                 masks: np.ndarray) -> np.ndarray:
    """Compose (M, 3, H, W) images: original where the mask keeps a segment,
    filler where it drops it."""
    keep = masks[:, labels]  # (M, H, W) via label lookup
    keep = keep[:, None, :, :]
    return keep * img_data[None] + (1.0 - keep) * filler[None]


def mask_value_evaluator(handle: ModelHandle, img: ImageTensor, sp: SuperpixelMap,
                         target_class: int, filler: np.ndarray = None,
                         batch_cap: int = 64):
    """Returns value_fn(masks (M, S)) -> (M,) target-class probabilities."""
    require_unit(img)
    if filler is None:
        filler = segment_mean_image(img, sp)

    def value_fn(masks: np.ndarray) -> np.ndarray:
        masks = np.asarray(masks, dtype=np.float64)
        if masks.ndim == 1:
            masks = masks[None]
        values = np.empty(len(masks))
        for start in range(0, len(masks), batch_cap):
            chunk = masks[start : start + batch_cap]
            imgs = masked_batch(img.data, sp.labels, filler, chunk)
            probs = predict_unit(handle, imgs)
            values[start : start + len(chunk)] = probs[:, target_class]
        return values

    return value_fn


def batchify(scalar_fn):
    """Lift a single-mask value function to the batched signature."""

    def value_fn(masks: np.ndarray) -> np.ndarray:
        masks = np.asarray(masks)
        if masks.ndim == 1:
            masks = masks[None]
        return np.array([float(scalar_fn(m)) for m in masks])

    return value_fn
