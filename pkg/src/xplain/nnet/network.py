"""Network assembly, forward tapes, and reverse-mode gradients."""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from ..errors import ShapeMismatch, UnknownLayerName
from ..rng import substream
from . import layers as L


class Network:
    """An ordered layer stack with per-layer parameters and a frozen mask.

    Frozen layers still participate in forward/backward, but the training
    loop never applies updates to them.
    """

    def __init__(self, layer_specs, input_shape, seed: int = 0):
        self.input_shape = tuple(int(v) for v in input_shape)
        self.layers = self._name_layers(layer_specs)
        self.shapes = self._resolve_shapes()
        self.params = {}
        self.frozen = {}
        for idx, spec in enumerate(self.layers):
            p = L.init_params(spec, self.shapes[idx], substream(seed, "init", idx))
            if p is not None:
                self.params[spec.name] = p
                self.frozen[spec.name] = False

    @staticmethod
    def _name_layers(layer_specs):
        named = []
        seen = set()
        for idx, spec in enumerate(layer_specs):
            name = spec.name or f"{spec.kind}_{idx}"
            if name in seen:
                raise ValueError(f"duplicate layer name {name!r}")
            seen.add(name)
            named.append(LayerSpecNamed(spec, name))
        return named

    def _resolve_shapes(self):
        shapes = []
        shape = self.input_shape
        for spec in self.layers:
            shapes.append(shape)
            shape = L.output_shape(spec, shape)
        self.output_shape = shape
        return shapes

    # -- introspection ---------------------------------------------------

    def layer(self, name: str):
        for spec in self.layers:
            if spec.name == name:
                return spec
        raise UnknownLayerName(f"no layer named {name!r}")

    def layer_names(self):
        return [spec.name for spec in self.layers]

    def conv_layer_names(self):
        return [s.name for s in self.layers if s.kind == "conv2d"]

    def last_conv_name(self) -> str:
        convs = self.conv_layer_names()
        if not convs:
            raise UnknownLayerName("network has no convolution layers")
        return convs[-1]

    @property
    def num_classes(self) -> int:
        return int(self.output_shape[0])

    # -- parameter management ---------------------------------------------

    def set_frozen(self, name: str, flag: bool = True):
        if name not in self.params:
            raise UnknownLayerName(f"layer {name!r} has no parameters")
        self.frozen[name] = flag

    def freeze_all(self, flag: bool = True):
        for name in self.frozen:
            self.frozen[name] = flag

    def trainable_names(self):
        return [n for n, frozen in self.frozen.items() if not frozen]

    def copy_params(self) -> dict:
        return copy.deepcopy(self.params)

    def load_params(self, params: dict):
        for name, slots in params.items():
            if name not in self.params:
                raise UnknownLayerName(f"unexpected params for layer {name!r}")
            for slot, value in slots.items():
                if self.params[name][slot].shape != value.shape:
                    raise ShapeMismatch(
                        f"param {name}.{slot}: expected {self.params[name][slot].shape}, got {value.shape}"
                    )
                self.params[name][slot] = value.astype(np.float64).copy()


def LayerSpecNamed(spec: L.LayerSpec, name: str) -> L.LayerSpec:
    if spec.name == name:
        return spec
    return L.LayerSpec(
        kind=spec.kind, name=name, out_channels=spec.out_channels, kernel=spec.kernel,
        stride=spec.stride, pad=spec.pad, units=spec.units, activation=spec.activation,
        rate=spec.rate,
    )


@dataclass
class Tape:
    """Everything the forward pass cached: per-layer outputs (the feature
    maps attribution consumes), backward caches, logits and probabilities."""

    x: np.ndarray
    activations: dict
    caches: list
    logits: np.ndarray
    probs: np.ndarray
    train_mode: bool


def forward(net: Network, x: np.ndarray, train_mode: bool = False,
            rng: np.random.Generator = None) -> Tape:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == len(net.input_shape):
        x = x[None]
    if tuple(x.shape[1:]) != net.input_shape:
        raise ShapeMismatch(f"input {x.shape[1:]} != network input {net.input_shape}")
    has_dropout = any(s.kind == "dropout" for s in net.layers)
    if train_mode and has_dropout and rng is None:
        raise ValueError("train-mode forward through dropout needs an explicit rng")

    out = x
    activations = {}
    caches = []
    for spec in net.layers:
        if spec.kind == "conv2d":
            p = net.params[spec.name]
            out, cache = L.conv2d_forward(out, p["w"], p["b"], spec.stride, L.conv_padding(spec))
        elif spec.kind == "relu":
            out, cache = L.relu_forward(out)
        elif spec.kind == "maxpool2":
            out, cache = L.maxpool_forward(out)
        elif spec.kind == "flatten":
            out, cache = L.flatten_forward(out)
        elif spec.kind == "dense":
            p = net.params[spec.name]
            out, cache = L.dense_forward(out, p["w"], p["b"], spec.activation)
        elif spec.kind == "dropout":
            out, cache = L.dropout_forward(out, spec.rate, train_mode, rng)
        elif spec.kind == "softmax":
            out, cache = L.softmax_forward(out)
        else:  # pragma: no cover
            raise ValueError(f"unknown layer kind {spec.kind}")
        activations[spec.name] = out
        caches.append(cache)

    ends_softmax = net.layers and net.layers[-1].kind == "softmax"
    if ends_softmax:
        logits = activations[net.layers[-2].name] if len(net.layers) > 1 else x
        probs = out
    else:
        logits = out
        probs = None
    return Tape(x=x, activations=activations, caches=caches,
                logits=logits, probs=probs, train_mode=train_mode)


def backward(net: Network, tape: Tape, grad_out: np.ndarray,
             from_logits: bool = False, activation_grads=()):
    """Reverse pass. Returns (param_grads, act_grads).

    ``grad_out`` is the gradient w.r.t. the network output, or w.r.t. the
    pre-softmax logits when ``from_logits`` (the trailing softmax layer is
    skipped). ``activation_grads`` names layers whose output gradients to
    expose, e.g. conv feature maps.
    """
    wanted = set(activation_grads)
    known = set(net.layer_names())
    unknown = wanted - known
    if unknown:
        raise UnknownLayerName(f"no layer(s) named {sorted(unknown)}")

    start = len(net.layers) - 1
    if from_logits:
        if not net.layers or net.layers[-1].kind != "softmax":
            raise ValueError("from_logits requires a trailing softmax layer")
        start -= 1

    g = np.asarray(grad_out, dtype=np.float64)
    param_grads = {}
    act_grads = {}
    for idx in range(start, -1, -1):
        spec = net.layers[idx]
        if spec.name in wanted:
            act_grads[spec.name] = g.copy()
        cache = tape.caches[idx]
        if spec.kind == "conv2d":
            p = net.params[spec.name]
            g, pg = L.conv2d_backward(g, cache, p["w"], spec.stride, L.conv_padding(spec))
        elif spec.kind == "relu":
            g, pg = L.relu_backward(g, cache)
        elif spec.kind == "maxpool2":
            g, pg = L.maxpool_backward(g, cache)
        elif spec.kind == "flatten":
            g, pg = L.flatten_backward(g, cache)
        elif spec.kind == "dense":
            p = net.params[spec.name]
            g, pg = L.dense_backward(g, cache, p["w"], spec.activation)
        elif spec.kind == "dropout":
            g, pg = L.dropout_backward(g, cache)
        elif spec.kind == "softmax":
            g, pg = L.softmax_backward(g, cache)
        else:  # pragma: no cover
            raise ValueError(f"unknown layer kind {spec.kind}")
        if pg is not None and not net.frozen.get(spec.name, False):
            param_grads[spec.name] = pg
    return param_grads, act_grads


def forward_from(net: Network, layer_name: str, activation: np.ndarray,
                 stop_before: str = None) -> np.ndarray:
    """Re-run the stack in eval mode starting from a replacement output of
    ``layer_name``, optionally stopping before a later layer (e.g. the
    softmax, to read logits). Used to probe gradients numerically."""
    idx = net.layer_names().index(net.layer(layer_name).name)
    out = np.asarray(activation, dtype=np.float64)
    for spec in net.layers[idx + 1 :]:
        if stop_before is not None and spec.name == stop_before:
            break
        if spec.kind == "conv2d":
            p = net.params[spec.name]
            out, _ = L.conv2d_forward(out, p["w"], p["b"], spec.stride, L.conv_padding(spec))
        elif spec.kind == "relu":
            out, _ = L.relu_forward(out)
        elif spec.kind == "maxpool2":
            out, _ = L.maxpool_forward(out)
        elif spec.kind == "flatten":
            out, _ = L.flatten_forward(out)
        elif spec.kind == "dense":
            p = net.params[spec.name]
            out, _ = L.dense_forward(out, p["w"], p["b"], spec.activation)
        elif spec.kind == "dropout":
            out, _ = L.dropout_forward(out, spec.rate, False, None)
        elif spec.kind == "softmax":
            out, _ = L.softmax_forward(out)
    return out


def cross_entropy(probs: np.ndarray, one_hot: np.ndarray) -> float:
    """Mean over the batch of -log p_true, with p clamped at 1e-12."""
    p_true = (probs * one_hot).sum(axis=1)
    return float(np.mean(-np.log(np.clip(p_true, 1e-12, None))))


def cross_entropy_grad_probs(probs: np.ndarray, one_hot: np.ndarray) -> np.ndarray:
    n = probs.shape[0]
    return -one_hot / (np.clip(probs, 1e-12, None) * n)


def cross_entropy_grad_logits(probs: np.ndarray, one_hot: np.ndarray) -> np.ndarray:
    """Shortcut through the softmax: (p - y) / N."""
    return (probs - one_hot) / probs.shape[0]
