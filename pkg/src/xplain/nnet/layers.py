"""Layer specs and per-kind forward/backward kernels (float64 numpy).

Each forward returns (output, cache); each backward takes the upstream
gradient and the cache and returns (input gradient, param gradients or
None). Convolution uses an im2col workspace chunked over the batch axis so
memory stays bounded at 224x224 inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# im2col workspace cap, in float64 elements (~128 MB)
_CONV_WORKSPACE = 16_000_000

KINDS = ("conv2d", "relu", "maxpool2", "flatten", "dense", "dropout", "softmax")


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    name: str = ""
    out_channels: int = 0
    kernel: int = 3
    stride: int = 1
    pad: object = "same"  # "same" or an int
    units: int = 0
    activation: str = "linear"
    rate: float = 0.0

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "name": self.name}
        if self.kind == "conv2d":
            d.update(out_channels=self.out_channels, kernel=self.kernel,
                     stride=self.stride, pad=self.pad)
        elif self.kind == "dense":
            d.update(units=self.units, activation=self.activation)
        elif self.kind == "dropout":
            d.update(rate=self.rate)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "LayerSpec":
        return cls(**d)


def conv2d(out_channels: int, kernel: int = 3, stride: int = 1, pad="same",
           name: str = "") -> LayerSpec:
    if out_channels < 1:
        raise ValueError("out_channels must be >= 1")
    if pad == "same" and kernel % 2 == 0:
        raise ValueError("'same' padding requires an odd kernel")
    return LayerSpec("conv2d", name, out_channels=out_channels, kernel=kernel,
                     stride=stride, pad=pad)


def relu(name: str = "") -> LayerSpec:
    return LayerSpec("relu", name)


def maxpool(name: str = "") -> LayerSpec:
    return LayerSpec("maxpool2", name)


def flatten(name: str = "") -> LayerSpec:
    return LayerSpec("flatten", name)


def dense(units: int, activation: str = "linear", name: str = "") -> LayerSpec:
    if units < 1:
        raise ValueError("dense units must be >= 1")
    if activation not in ("linear", "relu"):
        raise ValueError(f"unsupported dense activation {activation!r}")
    return LayerSpec("dense", name, units=units, activation=activation)


def dropout(rate: float, name: str = "") -> LayerSpec:
    if not 0.0 <= rate < 1.0:
        raise ValueError("dropout rate must be in [0, 1)")
    return LayerSpec("dropout", name, rate=rate)


def softmax(name: str = "") -> LayerSpec:
    return LayerSpec("softmax", name)


# --- shape and parameter bookkeeping -----------------------------------------


def conv_padding(spec: LayerSpec) -> int:
    return spec.kernel // 2 if spec.pad == "same" else int(spec.pad)


def output_shape(spec: LayerSpec, in_shape: tuple) -> tuple:
    if spec.kind == "conv2d":
        c, h, w = in_shape
        p = conv_padding(spec)
        oh = (h + 2 * p - spec.kernel) // spec.stride + 1
        ow = (w + 2 * p - spec.kernel) // spec.stride + 1
        if oh < 1 or ow < 1:
            raise ValueError(f"conv2d output collapsed for input {in_shape}")
        return (spec.out_channels, oh, ow)
    if spec.kind == "maxpool2":
        c, h, w = in_shape
        if h < 2 or w < 2:
            raise ValueError(f"maxpool needs spatial dims >= 2, got {in_shape}")
        return (c, h // 2, w // 2)
    if spec.kind == "flatten":
        return (int(np.prod(in_shape)),)
    if spec.kind == "dense":
        if len(in_shape) != 1:
            raise ValueError("dense expects flattened input")
        return (spec.units,)
    return in_shape


def init_params(spec: LayerSpec, in_shape: tuple, rng: np.random.Generator):
    """Fan-in-scaled uniform weights, U(-sqrt(6/fan_in), +sqrt(6/fan_in)); zero biases."""
    if spec.kind == "conv2d":
        c = in_shape[0]
        fan_in = c * spec.kernel * spec.kernel
        limit = np.sqrt(6.0 / fan_in)
        w = rng.uniform(-limit, limit, size=(spec.out_channels, c, spec.kernel, spec.kernel))
        return {"w": w, "b": np.zeros(spec.out_channels)}
    if spec.kind == "dense":
        d = in_shape[0]
        limit = np.sqrt(6.0 / d)
        w = rng.uniform(-limit, limit, size=(d, spec.units))
        return {"w": w, "b": np.zeros(spec.units)}
    return None


# --- conv2d -------------------------------------------------------------------


def _im2col(xp: np.ndarray, kh: int, kw: int, oh: int, ow: int, stride: int) -> np.ndarray:
    n, c = xp.shape[:2]
    cols = np.empty((n, c, kh, kw, oh, ow))
    for i in range(kh):
        for j in range(kw):
            cols[:, :, i, j] = xp[:, :, i : i + stride * oh : stride, j : j + stride * ow : stride]
    return cols


def _conv_chunks(n: int, per_image: int) -> int:
    return max(1, min(n, _CONV_WORKSPACE // max(per_image, 1)))


def conv2d_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray, stride: int, pad: int):
    n, c, h, wd = x.shape
    f, _, kh, kw = w.shape
    oh = (h + 2 * pad - kh) // stride + 1
    ow = (wd + 2 * pad - kw) // stride + 1
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x
    out = np.empty((n, f, oh, ow))
    wm = w.reshape(f, -1)
    step = _conv_chunks(n, c * kh * kw * oh * ow)
    for s in range(0, n, step):
        e = min(s + step, n)
        cols = _im2col(xp[s:e], kh, kw, oh, ow, stride).reshape(e - s, c * kh * kw, oh * ow)
        out[s:e] = np.matmul(wm, cols).reshape(e - s, f, oh, ow)
    out += b[None, :, None, None]
    return out, (x, oh, ow)


def conv2d_backward(dout: np.ndarray, cache, w: np.ndarray, stride: int, pad: int):
    x, oh, ow = cache
    n, c, h, wd = x.shape
    f, _, kh, kw = w.shape
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x
    dxp = np.zeros_like(xp)
    dw = np.zeros_like(w)
    db = dout.sum(axis=(0, 2, 3))
    wm = w.reshape(f, -1)
    step = _conv_chunks(n, c * kh * kw * oh * ow)
    for s in range(0, n, step):
        e = min(s + step, n)
        m = e - s
        cols = _im2col(xp[s:e], kh, kw, oh, ow, stride).reshape(m, c * kh * kw, oh * ow)
        dflat = dout[s:e].reshape(m, f, oh * ow)
        dw += np.matmul(dflat, cols.transpose(0, 2, 1)).sum(axis=0).reshape(w.shape)
        dcols = np.matmul(wm.T, dflat).reshape(m, c, kh, kw, oh, ow)
        for i in range(kh):
            for j in range(kw):
                dxp[s:e, :, i : i + stride * oh : stride, j : j + stride * ow : stride] += dcols[:, :, i, j]
    dx = dxp[:, :, pad : pad + h, pad : pad + wd] if pad else dxp
    return dx, {"w": dw, "b": db}


# --- other layers --------------------------------------------------------------


def relu_forward(x):
    return np.maximum(x, 0.0), x


def relu_backward(dout, x):
    return dout * (x > 0), None


def maxpool_forward(x):
    n, c, h, w = x.shape
    h2, w2 = h // 2, w // 2
    windows = x[:, :, : h2 * 2, : w2 * 2].reshape(n, c, h2, 2, w2, 2)
    windows = windows.transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h2, w2, 4)
    idx = windows.argmax(axis=-1)
    out = np.take_along_axis(windows, idx[..., None], axis=-1)[..., 0]
    return out, (idx, x.shape)


def maxpool_backward(dout, cache):
    idx, x_shape = cache
    n, c, h, w = x_shape
    h2, w2 = h // 2, w // 2
    dwin = np.zeros((n, c, h2, w2, 4))
    np.put_along_axis(dwin, idx[..., None], dout[..., None], axis=-1)
    dtrim = dwin.reshape(n, c, h2, w2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h2 * 2, w2 * 2)
    dx = np.zeros(x_shape)
    dx[:, :, : h2 * 2, : w2 * 2] = dtrim
    return dx, None


def flatten_forward(x):
    return x.reshape(x.shape[0], -1), x.shape


def flatten_backward(dout, shape):
    return dout.reshape(shape), None


def dense_forward(x, w, b, activation):
    z = x @ w + b
    out = np.maximum(z, 0.0) if activation == "relu" else z
    return out, (x, z)


def dense_backward(dout, cache, w, activation):
    x, z = cache
    dz = dout * (z > 0) if activation == "relu" else dout
    dw = x.T @ dz
    db = dz.sum(axis=0)
    dx = dz @ w.T
    return dx, {"w": dw, "b": db}


def dropout_forward(x, rate, train_mode, rng):
    """Inverted dropout: survivors scaled by 1/(1-rate) so inference is identity."""
    if not train_mode or rate == 0.0:
        return x, None
    keep = 1.0 - rate
    mask = (rng.random(x.shape) < keep) / keep
    return x * mask, mask


def dropout_backward(dout, mask):
    if mask is None:
        return dout, None
    return dout * mask, None


def softmax_forward(x):
    shifted = x - x.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    p = e / e.sum(axis=1, keepdims=True)
    return p, p


def softmax_backward(dout, p):
    inner = (dout * p).sum(axis=1, keepdims=True)
    return p * (dout - inner), None
