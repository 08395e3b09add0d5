"""Local surrogate explanations over superpixels.

Binary keep/drop masks are drawn uniformly (the first sample is the intact
image), the model is probed on the masked images, and a proximity-weighted
ridge regression is fitted from masks to the target-class probability. The
proximity kernel is exp(-d^2 / width^2) on the cosine distance between a
mask and the all-ones mask. When there are more segments than requested
features, greedy forward selection picks the retained features; everything
else reports a zero coefficient.
"""

from __future__ import annotations

import numpy as np

from ..errors import DegenerateDesign
from ..gateway import ModelHandle, predict_unit, top_class
from ..imaging import ImageTensor
from ..rng import substream
from .perturb import mask_value_evaluator, require_unit
from .superpixels import SuperpixelMap, segment_superpixels
from .types import AttributionResult

DEFAULT_NUM_SAMPLES = 1000
DEFAULT_NUM_FEATURES = 10
DEFAULT_KERNEL_WIDTH = 0.25
DEFAULT_RIDGE_LAMBDA = 1.0


def sample_masks(num_samples: int, num_segments: int, rng: np.random.Generator) -> np.ndarray:
    masks = rng.integers(0, 2, size=(num_samples, num_segments)).astype(np.float64)
    masks[0] = 1.0  # the unperturbed instance anchors the fit
    return masks


def proximity_weights(masks: np.ndarray, kernel_width: float) -> np.ndarray:
    """exp(-d^2 / w^2) with d = cosine distance between mask and all-ones."""
    s = masks.shape[1]
    on = masks.sum(axis=1)
    cos = np.sqrt(on / s)  # <m, 1> / (|m| |1|) for binary masks
    d = 1.0 - cos
    return np.exp(-(d**2) / kernel_width**2)


def weighted_ridge(x: np.ndarray, y: np.ndarray, w: np.ndarray, lam: float):
    """Ridge on the weighted-standardized design; returns (intercept, coefs)
    in the original column scale."""
    sw = w / w.sum()
    mu = sw @ x
    var = sw @ (x - mu) ** 2
    sigma = np.sqrt(var)
    sigma[sigma < 1e-12] = 1.0
    z = (x - mu) / sigma
    ybar = float(sw @ y)
    zw = z * w[:, None]
    a = z.T @ zw / 1.0
    a[np.diag_indices_from(a)] += lam
    beta = np.linalg.solve(a, zw.T @ (y - ybar))
    coef = beta / sigma
    intercept = ybar - float(coef @ mu)
    return intercept, coef


def _weighted_rss(x, y, w, lam):
    intercept, coef = weighted_ridge(x, y, w, lam)
    r = y - intercept - x @ coef
    return float(w @ (r**2))


def forward_selection(x: np.ndarray, y: np.ndarray, w: np.ndarray, lam: float,
                      k: int) -> list:
    """Greedily add the column that most reduces the weighted residual."""
    selected: list = []
    remaining = list(range(x.shape[1]))
    for _ in range(min(k, x.shape[1])):
        best_col, best_rss = None, np.inf
        for col in remaining:
            rss = _weighted_rss(x[:, selected + [col]], y, w, lam)
            if rss < best_rss:
                best_col, best_rss = col, rss
        selected.append(best_col)
        remaining.remove(best_col)
    return selected


def fit_surrogate(masks: np.ndarray, values: np.ndarray, weights: np.ndarray,
                  num_features: int, lam: float):
    """Returns (intercept, full-length coefficient vector, selected columns)."""
    if np.all(masks == masks[0]):
        raise DegenerateDesign("all perturbation masks are identical")
    s = masks.shape[1]
    if s > num_features:
        selected = forward_selection(masks, values, weights, lam, num_features)
    else:
        selected = list(range(s))
    intercept, coef_sel = weighted_ridge(masks[:, selected], values, weights, lam)
    coef = np.zeros(s)
    coef[selected] = coef_sel
    return intercept, coef, sorted(selected)


def lime_fit_masks(value_fn, num_segments: int, num_samples: int = DEFAULT_NUM_SAMPLES,
                   num_features: int = DEFAULT_NUM_FEATURES,
                   kernel_width: float = DEFAULT_KERNEL_WIDTH,
                   ridge_lambda: float = DEFAULT_RIDGE_LAMBDA, seed: int = 0):
    """Mask-space core: sample, probe value_fn, fit. Returns
    (intercept, coefs, selected, masks)."""
    if num_samples < num_segments + 2:
        raise ValueError(f"num_samples must be >= S+2 = {num_segments + 2}")
    masks = sample_masks(num_samples, num_segments, substream(seed, "lime-masks"))
    values = np.asarray(value_fn(masks), dtype=np.float64)
    weights = proximity_weights(masks, kernel_width)
    intercept, coef, selected = fit_surrogate(masks, values, weights,
                                              num_features, ridge_lambda)
    return intercept, coef, selected, masks


def lime_explain(handle: ModelHandle, img: ImageTensor, sp: SuperpixelMap = None,
                 num_samples: int = DEFAULT_NUM_SAMPLES,
                 num_features: int = DEFAULT_NUM_FEATURES,
                 kernel_width: float = DEFAULT_KERNEL_WIDTH,
                 ridge_lambda: float = DEFAULT_RIDGE_LAMBDA,
                 seed: int = 0, target_class: int = None,
                 batch_cap: int = 64) -> AttributionResult:
    require_unit(img)
    if sp is None:
        sp = segment_superpixels(img, seed=seed)
    if target_class is None:
        target_class, prediction = top_class(handle, _normalized(handle, img))
    else:
        prediction = float(predict_unit(handle, img.data[None])[0][target_class])

    value_fn = mask_value_evaluator(handle, img, sp, target_class, batch_cap=batch_cap)
    intercept, coef, selected, _ = lime_fit_masks(
        value_fn, sp.num_segments, num_samples=num_samples, num_features=num_features,
        kernel_width=kernel_width, ridge_lambda=ridge_lambda, seed=seed,
    )
    return AttributionResult(
        method="lime",
        target_class=target_class,
        base_value=intercept,
        scores=coef,
        metadata={
            "num_samples": num_samples,
            "num_features": num_features,
            "kernel_width": kernel_width,
            "ridge_lambda": ridge_lambda,
            "seed": seed,
            "num_segments": sp.num_segments,
            "selected": selected,
            "filler": "segment_mean",
            "prediction": prediction,
        },
        class_names=handle.class_names,
        segments=sp,
    )


def _normalized(handle: ModelHandle, img: ImageTensor) -> np.ndarray:
    from ..gateway import normalize_unit_batch

    return normalize_unit_batch(handle, img.data[None])[0]
