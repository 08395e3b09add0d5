"""SLIC-style superpixel segmentation.

K-means clustering in (L, a, b, y, x) space with a spatial search window of
twice the grid step per cluster, followed by a connectivity pass that gives
every segment a single 4-connected component. Fragments smaller than
``min_size`` (default area / (4 * target)) are merged into their dominant
neighbour. Labels come out dense in 0..S-1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from ..imaging import ImageTensor, RangeTag
from ..errors import RangeTagMismatch
from ..rng import substream

_CROSS = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)

# D65 white point and sRGB -> XYZ matrix
_WHITE = np.array([0.95047, 1.0, 1.08883])
_RGB2XYZ = np.array([
    [0.4124564, 0.3575761, 0.1804375],
    [0.2126729, 0.7151522, 0.0721750],
    [0.0193339, 0.1191920, 0.9503041],
])


@dataclass
class SuperpixelMap:
    labels: np.ndarray  # (H, W) int32, dense 0..S-1
    num_segments: int

    @property
    def shape(self):
        return self.labels.shape


def rgb_to_lab(rgb: np.ndarray) -> np.ndarray:
    """(3, H, W) unit-range sRGB -> CIELAB (3, H, W)."""
    c = np.clip(rgb, 0.0, 1.0)
    linear = np.where(c <= 0.04045, c / 12.92, ((c + 0.055) / 1.055) ** 2.4)
    xyz = np.einsum("ij,jhw->ihw", _RGB2XYZ, linear) / _WHITE[:, None, None]
    eps = 216.0 / 24389.0
    kappa = 24389.0 / 27.0
    f = np.where(xyz > eps, np.cbrt(xyz), (kappa * xyz + 16.0) / 116.0)
    lab = np.empty_like(xyz)
    lab[0] = 116.0 * f[1] - 16.0
    lab[1] = 500.0 * (f[0] - f[1])
    lab[2] = 200.0 * (f[1] - f[2])
    return lab


def segment_superpixels(img: ImageTensor, target_segments: int = 50,
                        compactness: float = 10.0, seed: int = 0,
                        n_iter: int = 10, min_size: int = None) -> SuperpixelMap:
    if img.range_tag is not RangeTag.UNIT:
        raise RangeTagMismatch("segmentation expects a Unit-range image")
    if target_segments < 1:
        raise ValueError("target_segments must be >= 1")
    lab = rgb_to_lab(img.data)
    h, w = lab.shape[1:]
    area = h * w
    step = max(np.sqrt(area / target_segments), 1.0)
    if min_size is None:
        min_size = max(int(area / (4 * target_segments)), 1)

    ny = max(1, int(round(h / step)))
    nx = max(1, int(round(w / step)))
    rng = substream(seed, "slic-init")
    cy = (np.arange(ny) + 0.5) * h / ny + rng.uniform(-0.5, 0.5, ny)
    cx = (np.arange(nx) + 0.5) * w / nx + rng.uniform(-0.5, 0.5, nx)
    centers_yx = np.array([(y, x) for y in np.clip(cy, 0, h - 1) for x in np.clip(cx, 0, w - 1)])
    k = len(centers_yx)
    iy = np.round(centers_yx[:, 0]).astype(int)
    ix = np.round(centers_yx[:, 1]).astype(int)
    centers_lab = lab[:, iy, ix].T  # (k, 3)

    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    spatial_scale = (compactness / step) ** 2
    labels = np.full((h, w), -1, dtype=np.int32)
    for _ in range(n_iter):
        best = np.full((h, w), np.inf)
        labels.fill(-1)
        for ki in range(k):
            y0 = max(int(centers_yx[ki, 0] - 2 * step), 0)
            y1 = min(int(centers_yx[ki, 0] + 2 * step) + 1, h)
            x0 = max(int(centers_yx[ki, 1] - 2 * step), 0)
            x1 = min(int(centers_yx[ki, 1] + 2 * step) + 1, w)
            patch = lab[:, y0:y1, x0:x1]
            d_lab = ((patch - centers_lab[ki][:, None, None]) ** 2).sum(axis=0)
            d_xy = (ys[y0:y1, x0:x1] - centers_yx[ki, 0]) ** 2 + (xs[y0:y1, x0:x1] - centers_yx[ki, 1]) ** 2
            dist = d_lab + spatial_scale * d_xy
            window_best = best[y0:y1, x0:x1]
            better = dist < window_best
            window_best[better] = dist[better]
            labels[y0:y1, x0:x1][better] = ki
        # orphans outside every window: nearest center by spatial distance
        orphan = labels < 0
        if orphan.any():
            oy, ox = np.nonzero(orphan)
            d = (oy[:, None] - centers_yx[None, :, 0]) ** 2 + (ox[:, None] - centers_yx[None, :, 1]) ** 2
            labels[oy, ox] = d.argmin(axis=1)
        # recenter
        for ki in range(k):
            mask = labels == ki
            if mask.any():
                centers_yx[ki] = (ys[mask].mean(), xs[mask].mean())
                centers_lab[ki] = lab[:, mask].mean(axis=1)

    labels = _enforce_connectivity(labels, k, min_size)
    return SuperpixelMap(labels=labels, num_segments=int(labels.max()) + 1)


def _neighbor_labels(out: np.ndarray, cmask: np.ndarray) -> np.ndarray:
    """Assigned labels on the 4-neighbour boundary of a fragment."""
    ring = np.zeros_like(cmask)
    ring[1:, :] |= cmask[:-1, :]
    ring[:-1, :] |= cmask[1:, :]
    ring[:, 1:] |= cmask[:, :-1]
    ring[:, :-1] |= cmask[:, 1:]
    ring &= ~cmask
    votes = out[ring]
    return votes[votes >= 0]


def _enforce_connectivity(labels: np.ndarray, k: int, min_size: int) -> np.ndarray:
    """Walk connected components in raster order; a component below
    ``min_size`` merges into its dominant already-assigned neighbour, larger
    ones become segments of their own. Raster order guarantees every
    component after the first has an assigned neighbour, so fragment counts
    cannot explode on busy images."""
    components = []
    for ki in range(k):
        mask = labels == ki
        if not mask.any():
            continue
        comp, n = ndimage.label(mask, structure=_CROSS)
        for ci in range(1, n + 1):
            cmask = comp == ci
            components.append((int(np.argmax(cmask.ravel())), cmask))
    components.sort(key=lambda item: item[0])

    out = np.full_like(labels, -1)
    next_label = 0
    for _, cmask in components:
        votes = _neighbor_labels(out, cmask)
        if cmask.sum() < min_size and votes.size:
            out[cmask] = np.bincount(votes).argmax()
        else:
            out[cmask] = next_label
            next_label += 1
    # merged fragments attach to adjacent regions, so every label is one
    # 4-connected region; make the ids dense
    _, dense = np.unique(out, return_inverse=True)
    return dense.reshape(out.shape).astype(np.int32)
