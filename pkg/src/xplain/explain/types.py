"""Attribution result container shared by all three methods."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

METHODS = ("lime", "kernel_shap", "grad_cam")


@dataclass
class AttributionResult:
    """Per-feature signed importance for one (image, class) pair.

    ``scores`` is one float per superpixel for lime/kernel_shap and an
    (H, W) pixel map in [0, 1] for grad_cam. ``base_value`` is the surrogate
    intercept (lime), the background value (kernel_shap) or 0 (grad_cam).
    ``segments`` keeps the superpixel map for rendering; it is not
    serialized into the sidecar.
    """

    method: str
    target_class: int
    base_value: float
    scores: np.ndarray
    metadata: dict = field(default_factory=dict)
    class_names: list = None
    segments: object = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        self.scores = np.asarray(self.scores, dtype=np.float64)
        if not np.all(np.isfinite(self.scores)):
            raise ValueError("attribution scores must be finite")

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "target_class": int(self.target_class),
            "target_class_name": (
                self.class_names[self.target_class] if self.class_names else None
            ),
            "base_value": float(self.base_value),
            "scores": self.scores.tolist(),
            "metadata": self.metadata,
            "class_names": self.class_names,
        }

    def to_json_bytes(self) -> bytes:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2).encode("utf-8")
