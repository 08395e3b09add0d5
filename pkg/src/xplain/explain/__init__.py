"""Attribution methods and their rendering styles."""

from .types import AttributionResult
from .superpixels import SuperpixelMap, rgb_to_lab, segment_superpixels
from .perturb import masked_batch, mask_value_evaluator, segment_mean_image
from .lime import lime_explain, lime_fit_masks
from .shap import exact_shapley, kernel_shap, kernel_shap_masks, shapley_kernel
from .gradcam import grad_cam
from .render import (
    STYLES,
    comparison_sheet,
    compose_cam_overlay,
    render,
    render_array,
    save_png,
    styles_for_method,
)

__all__ = [
    "AttributionResult",
    "SuperpixelMap", "segment_superpixels", "rgb_to_lab",
    "segment_mean_image", "masked_batch", "mask_value_evaluator",
    "lime_explain", "lime_fit_masks",
    "exact_shapley", "kernel_shap", "kernel_shap_masks", "shapley_kernel",
    "grad_cam",
    "STYLES", "styles_for_method", "render", "render_array", "save_png",
    "compose_cam_overlay", "comparison_sheet",
]
