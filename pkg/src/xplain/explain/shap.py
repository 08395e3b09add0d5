"""Shapley-value attribution: exact enumeration and the kernel estimator.

``exact_shapley`` enumerates every coalition (feasible to 12 features) and
applies the defining average-marginal-contribution formula; it is the
oracle the kernel path is tested against. ``kernel_shap_masks`` solves the
kernel-weighted least squares with the additivity constraint eliminated
into the last coordinate, so phi always sums to v(full) - v(empty) exactly.
At full coalition enumeration the two agree to solver precision.
"""

from __future__ import annotations

from math import comb, factorial

import numpy as np

from ..errors import TooManyFeatures
from ..gateway import ModelHandle, predict_unit, top_class
from ..imaging import ImageTensor
from ..rng import substream
from .perturb import mask_value_evaluator, require_unit, segment_mean_image
from .superpixels import SuperpixelMap, segment_superpixels
from .types import AttributionResult

EXACT_LIMIT = 12
DEFAULT_NUM_SAMPLES = 1000


def shapley_kernel(num_features: int, subset_size: int) -> float:
    """pi(s) = (S-1) / (C(S,s) * s * (S-s)); infinite endpoints excluded."""
    s, size = num_features, subset_size
    if size <= 0 or size >= s:
        raise ValueError("kernel weight defined for 0 < size < S only")
    return (s - 1) / (comb(s, size) * size * (s - size))


def _mask_bits(values: np.ndarray, num_features: int) -> np.ndarray:
    """Integers -> (len, S) 0/1 matrix, bit i = feature i."""
    return ((values[:, None] >> np.arange(num_features)[None, :]) & 1).astype(np.float64)


def exact_shapley(value_fn, num_features: int):
    """phi_i = sum over coalitions T (i not in T) of
    |T|! (S-|T|-1)! / S! * (v(T+i) - v(T)); returns (phi, v(empty))."""
    s = num_features
    if s > EXACT_LIMIT:
        raise TooManyFeatures(f"exact enumeration supports <= {EXACT_LIMIT} features, got {s}")
    if s < 1:
        raise ValueError("need at least one feature")
    all_masks = np.arange(2**s, dtype=np.int64)
    v = np.asarray(value_fn(_mask_bits(all_masks, s)), dtype=np.float64)
    popcount = np.array([bin(m).count("1") for m in range(2**s)])
    weight_by_size = np.array(
        [factorial(t) * factorial(s - t - 1) / factorial(s) for t in range(s)]
    )
    phi = np.empty(s)
    for i in range(s):
        bit = 1 << i
        without = all_masks[(all_masks & bit) == 0]
        phi[i] = np.sum(weight_by_size[popcount[without]] * (v[without | bit] - v[without]))
    return phi, float(v[0])


def _sample_coalitions(num_features: int, budget: int, rng: np.random.Generator):
    """Draw coalitions with size distribution proportional to the kernel
    mass per size; duplicates accumulate as weights."""
    s = num_features
    sizes = np.arange(1, s)
    # pi(size) * C(S, size) = (S-1) / (size * (S - size))
    mass = (s - 1) / (sizes * (s - sizes))
    p = mass / mass.sum()
    counts: dict = {}
    drawn_sizes = rng.choice(sizes, size=budget, p=p)
    for size in drawn_sizes:
        members = rng.choice(s, size=int(size), replace=False)
        mask = np.zeros(s, dtype=np.int64)
        mask[members] = 1
        key = mask.tobytes()
        counts[key] = counts.get(key, 0) + 1
    masks = np.array([np.frombuffer(k, dtype=np.int64) for k in counts]).astype(np.float64)
    weights = np.array(list(counts.values()), dtype=np.float64)
    return masks, weights


def kernel_shap_masks(value_fn, num_features: int, num_samples: int = None,
                      seed: int = 0):
    """Mask-space Kernel SHAP. Returns (phi, base, metadata).

    With ``num_samples`` None or >= 2^S the 2^S - 2 proper coalitions are
    enumerated with exact kernel weights; otherwise coalitions are sampled
    from the kernel distribution. The empty/full coalitions are always
    evaluated and pin the constraint sum(phi) = v(full) - v(empty).
    """
    s = num_features
    if s < 2:
        raise ValueError("kernel estimation needs at least 2 features")
    endpoints = np.stack([np.zeros(s), np.ones(s)])
    v0, v1 = np.asarray(value_fn(endpoints), dtype=np.float64)
    delta = v1 - v0

    budget = None if num_samples is None else max(int(num_samples) - 2, 1)
    full_count = 2**s - 2
    if budget is None or budget >= full_count:
        inner = np.arange(1, 2**s - 1, dtype=np.int64)
        masks = _mask_bits(inner, s)
        sizes = masks.sum(axis=1).astype(int)
        weights = np.array([shapley_kernel(s, z) for z in sizes])
        mode = "enumerate"
    else:
        masks, weights = _sample_coalitions(s, budget, substream(seed, "shap-masks"))
        mode = "sample"

    values = np.asarray(value_fn(masks), dtype=np.float64)

    # eliminate the constraint sum(phi) = delta into the last coordinate
    a = masks[:, :-1] - masks[:, -1:]
    b = values - v0 - masks[:, -1] * delta
    sw = np.sqrt(weights)
    phi_rest, *_ = np.linalg.lstsq(a * sw[:, None], b * sw, rcond=None)
    phi = np.append(phi_rest, delta - phi_rest.sum())
    meta = {"mode": mode, "coalitions": len(masks) + 2, "seed": seed}
    return phi, float(v0), meta


def kernel_shap(handle: ModelHandle, img: ImageTensor, sp: SuperpixelMap = None,
                target_class: int = None, num_samples: int = DEFAULT_NUM_SAMPLES,
                seed: int = 0, batch_cap: int = 64) -> AttributionResult:
    """Superpixel Kernel SHAP against the segment-mean background image."""
    require_unit(img)
    if sp is None:
        sp = segment_superpixels(img, seed=seed)
    if target_class is None:
        target_class, prediction = top_class(handle, _normalized(handle, img))
    else:
        prediction = float(predict_unit(handle, img.data[None])[0][target_class])

    background = segment_mean_image(img, sp)
    value_fn = mask_value_evaluator(handle, img, sp, target_class,
                                    filler=background, batch_cap=batch_cap)
    phi, base, meta = kernel_shap_masks(value_fn, sp.num_segments,
                                        num_samples=num_samples, seed=seed)
    return AttributionResult(
        method="kernel_shap",
        target_class=target_class,
        base_value=base,
        scores=phi,
        metadata={
            **meta,
            "num_samples": num_samples,
            "num_segments": sp.num_segments,
            "background": "segment_mean",
            "prediction": prediction,
        },
        class_names=handle.class_names,
        segments=sp,
    )


def _normalized(handle: ModelHandle, img: ImageTensor) -> np.ndarray:
    from ..gateway import normalize_unit_batch

    return normalize_unit_batch(handle, img.data[None])[0]
