"""Synthetic 4-class Gaussian-blob images.

Each class places a bright blob in one quadrant of an otherwise noisy dark
image. The task is linearly separable from raw pixels, which makes it a
self-validating substrate for end-to-end training checks: a plain logistic
regression already solves it, so a conv net that cannot is broken.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from .rng import substream

BLOB_CLASSES = ("q0_topleft", "q1_topright", "q2_bottomleft", "q3_bottomright")
# quadrant centers as (y, x) fractions
_CENTERS = ((0.25, 0.25), (0.25, 0.75), (0.75, 0.25), (0.75, 0.75))


def blob_image(class_index: int, size: int, rng: np.random.Generator) -> np.ndarray:
    """One unit-range (3, size, size) image with the class blob."""
    cy, cx = _CENTERS[class_index]
    jitter = size / 12.0
    cy = cy * size + rng.uniform(-jitter, jitter)
    cx = cx * size + rng.uniform(-jitter, jitter)
    sigma = size / 7.0
    ys, xs = np.mgrid[0:size, 0:size]
    bump = np.exp(-((ys - cy) ** 2 + (xs - cx) ** 2) / (2 * sigma**2))
    base = 0.15 + 0.08 * rng.random((3, size, size))
    img = base + 0.75 * bump[None, :, :]
    return np.clip(img, 0.0, 1.0)


def make_blob_task(n_per_class: int = 100, image_size: int = 32, seed: int = 0):
    """Returns (images (N, 3, s, s) unit-range, labels (N,) int64)."""
    images, labels = [], []
    for ci in range(4):
        for k in range(n_per_class):
            rng = substream(seed, "blob", ci, k)
            images.append(blob_image(ci, image_size, rng))
            labels.append(ci)
    order = substream(seed, "blob-order").permutation(len(images))
    x = np.stack(images)[order]
    y = np.array(labels, dtype=np.int64)[order]
    return x, y


def split_arrays(x: np.ndarray, y: np.ndarray, seed: int = 0):
    """80/10/10 cut of an in-memory array pair (floor rule, remainder to test)."""
    n = len(x)
    order = substream(seed, "array-split").permutation(n)
    n_train = int(np.floor(0.8 * n))
    n_val = int(np.floor(0.1 * n))
    tr = order[:n_train]
    va = order[n_train : n_train + n_val]
    te = order[n_train + n_val :]
    return (x[tr], y[tr]), (x[va], y[va]), (x[te], y[te])


def write_blob_corpus(root, n_per_class: int = 16, image_size: int = 32, seed: int = 0) -> Path:
    """Write the task as a class-folder PNG corpus (for CLI and grid runs)."""
    root = Path(root)
    for ci, cls in enumerate(BLOB_CLASSES):
        d = root / cls
        d.mkdir(parents=True, exist_ok=True)
        for k in range(n_per_class):
            rng = substream(seed, "blob", ci, k)
            img = blob_image(ci, image_size, rng)
            arr = np.round(img.transpose(1, 2, 0) * 255).astype(np.uint8)
            Image.fromarray(arr).save(d / f"blob_{k:04d}.png")
    return root
