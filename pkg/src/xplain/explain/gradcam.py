"""Gradient-weighted class activation maps on native networks.

The gradient of the pre-softmax class logit is taken at a convolution
layer's feature maps; each channel gets the spatial mean of its gradient as
a weight, the weighted channel sum is rectified, min-max normalized (a map
with zero range stays zero) and bilinearly upsampled to the input size.
Differentiating the logit instead of the probability keeps the map alive
for confident predictions.
"""

from __future__ import annotations

import numpy as np

from ..errors import GradientsUnavailable, UnknownLayerName
from ..gateway import ModelHandle, normalize_unit_batch
from ..imaging import ImageTensor, resize_plane_stack
from ..nnet import backward, forward
from .perturb import require_unit
from .types import AttributionResult


def grad_cam(handle: ModelHandle, img: ImageTensor, target_class: int = None,
             conv_layer: str = None) -> AttributionResult:
    if not (handle.has_gradients and handle.has_feature_maps):
        raise GradientsUnavailable(
            "activation mapping needs a native model; remote backends serve probabilities only"
        )
    require_unit(img)
    net = handle.backend.network
    layer_name = conv_layer or net.last_conv_name()
    spec = net.layer(layer_name)  # raises UnknownLayerName
    if spec.kind != "conv2d":
        raise UnknownLayerName(f"layer {layer_name!r} is {spec.kind}, need a conv2d layer")

    x = normalize_unit_batch(handle, img.data[None])
    tape = forward(net, x)
    probs = tape.probs[0]
    if target_class is None:
        target_class = int(np.argmax(probs))

    seed = np.zeros_like(tape.logits)
    seed[0, target_class] = 1.0
    _, act_grads = backward(net, tape, seed, from_logits=True,
                            activation_grads=(layer_name,))
    feature_maps = tape.activations[layer_name][0]  # (K, h, w)
    grads = act_grads[layer_name][0]

    alphas = grads.mean(axis=(1, 2))
    cam = np.maximum((alphas[:, None, None] * feature_maps).sum(axis=0), 0.0)
    lo, hi = cam.min(), cam.max()
    cam = (cam - lo) / (hi - lo) if hi > lo else np.zeros_like(cam)

    h, w = img.data.shape[1:]
    upsampled = resize_plane_stack(cam[None], (h, w))[0]
    return AttributionResult(
        method="grad_cam",
        target_class=target_class,
        base_value=0.0,
        scores=upsampled,
        metadata={
            "conv_layer": layer_name,
            "prediction": float(probs[target_class]),
            "map_resolution": list(cam.shape),
        },
        class_names=handle.class_names,
    )
