"""Image decoding, the resize/crop/normalize chain, and affine augmentation.

Images travel through the pipeline as channel-major float64 tensors with an
explicit value-range tag:

    Raw255 (decoded bytes) --scale_unit--> Unit --normalize--> Normalized

Bilinear resampling uses half-pixel-center alignment: output pixel ``i``
samples source coordinate ``(i + 0.5) * in/out - 0.5``, clamped to the edge.
The same convention is used for resizing, Grad-CAM map upsampling, and the
affine warp.
"""

from __future__ import annotations

import io
import math
import struct
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import CropTooLarge, DecodeError, ProtocolError, RangeTagMismatch
from .rng import substream


class RangeTag(Enum):
    RAW255 = "raw255"
    UNIT = "unit"
    NORMALIZED = "normalized"


@dataclass(frozen=True)
class NormalizationConstants:
    """Per-channel mean/std applied at unit scale."""

    mean: tuple
    std: tuple

    def __post_init__(self):
        if len(self.mean) != 3 or len(self.std) != 3:
            raise ValueError("mean and std must each have 3 components")
        if any(not math.isfinite(m) for m in self.mean):
            raise ValueError("mean components must be finite")
        if any(s <= 0 for s in self.std):
            raise ValueError("std components must be strictly positive")


# channel statistics of the ImageNet training corpus, the convention every
# pretrained backbone served by the gateway expects
IMAGENET = NormalizationConstants(mean=(0.485, 0.456, 0.406), std=(0.229, 0.224, 0.225))
# no-op constants for models trained directly on unit-scaled images
IDENTITY = NormalizationConstants(mean=(0.0, 0.0, 0.0), std=(1.0, 1.0, 1.0))

_RANGE_EPS = 1e-9


@dataclass
class ImageTensor:
    """Channel-major float image: data shape (3, height, width) plus range tag."""

    data: np.ndarray
    range_tag: RangeTag

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 3 or self.data.shape[0] != 3:
            raise ValueError(f"expected shape (3, h, w), got {self.data.shape}")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("image values must be finite")
        if self.range_tag is RangeTag.RAW255:
            lo, hi = 0.0, 255.0
        elif self.range_tag is RangeTag.UNIT:
            lo, hi = 0.0, 1.0
        else:
            return
        if self.data.size and (self.data.min() < lo - _RANGE_EPS or self.data.max() > hi + _RANGE_EPS):
            raise ValueError(f"values outside [{lo}, {hi}] for tag {self.range_tag.value}")

    @property
    def shape(self):
        return self.data.shape

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]


def decode_image(data: bytes) -> ImageTensor:
    """Decode JPEG/PNG bytes to a Raw255 tensor; grayscale is replicated to 3 channels."""
    try:
        with Image.open(io.BytesIO(data)) as im:
            im.load()
            rgb = im.convert("RGB")
    except (UnidentifiedImageError, OSError, ValueError, SyntaxError) as exc:
        raise DecodeError(f"cannot decode image bytes: {exc}") from exc
    arr = np.asarray(rgb, dtype=np.float64)  # (h, w, 3)
    return ImageTensor(arr.transpose(2, 0, 1), RangeTag.RAW255)


def load_image(path) -> ImageTensor:
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise DecodeError(f"cannot read {path}: {exc}") from exc
    return decode_image(data)


def _axis_samples(n_in: int, n_out: int):
    src = (np.arange(n_out, dtype=np.float64) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0.0, n_in - 1.0)
    lo = np.floor(src).astype(np.intp)
    hi = np.minimum(lo + 1, n_in - 1)
    return lo, hi, src - lo


def resize_plane_stack(arr: np.ndarray, target) -> np.ndarray:
    """Bilinear-resize a (c, h, w) array with half-pixel-center alignment."""
    oh, ow = int(target[0]), int(target[1])
    if oh < 1 or ow < 1:
        raise ValueError("target dimensions must be >= 1")
    c, ih, iw = arr.shape
    if (ih, iw) == (oh, ow):
        return arr.copy()
    y0, y1, fy = _axis_samples(ih, oh)
    x0, x1, fx = _axis_samples(iw, ow)
    fy = fy[None, :, None]
    fx = fx[None, None, :]
    r0 = arr[:, y0[:, None], x0[None, :]] * (1 - fx) + arr[:, y0[:, None], x1[None, :]] * fx
    r1 = arr[:, y1[:, None], x0[None, :]] * (1 - fx) + arr[:, y1[:, None], x1[None, :]] * fx
    return r0 * (1 - fy) + r1 * fy


def resize_bilinear(img: ImageTensor, target) -> ImageTensor:
    return ImageTensor(resize_plane_stack(img.data, target), img.range_tag)


def center_crop(img: ImageTensor, size) -> ImageTensor:
    h, w = int(size[0]), int(size[1])
    if h > img.height or w > img.width:
        raise CropTooLarge(f"crop {h}x{w} exceeds input {img.height}x{img.width}")
    top = (img.height - h) // 2
    left = (img.width - w) // 2
    return ImageTensor(img.data[:, top : top + h, left : left + w].copy(), img.range_tag)


def scale_unit(img: ImageTensor) -> ImageTensor:
    if img.range_tag is not RangeTag.RAW255:
        raise RangeTagMismatch(f"scale_unit expects Raw255, got {img.range_tag.value}")
    return ImageTensor(img.data / 255.0, RangeTag.UNIT)


def _const_cols(values) -> np.ndarray:
    return np.asarray(values, dtype=np.float64)[:, None, None]


def normalize(img: ImageTensor, constants: NormalizationConstants = IMAGENET) -> ImageTensor:
    if img.range_tag is not RangeTag.UNIT:
        raise RangeTagMismatch(f"normalize expects Unit, got {img.range_tag.value}")
    out = (img.data - _const_cols(constants.mean)) / _const_cols(constants.std)
    return ImageTensor(out, RangeTag.NORMALIZED)


def denormalize(img: ImageTensor, constants: NormalizationConstants = IMAGENET) -> ImageTensor:
    if img.range_tag is not RangeTag.NORMALIZED:
        raise RangeTagMismatch(f"denormalize expects Normalized, got {img.range_tag.value}")
    out = img.data * _const_cols(constants.std) + _const_cols(constants.mean)
    return ImageTensor(np.clip(out, 0.0, 1.0), RangeTag.UNIT)


@dataclass(frozen=True)
class PreprocessSpec:
    """The resize -> center-crop -> unit-scale -> normalize chain."""

    resize: tuple = (256, 256)
    crop: tuple = (224, 224)
    constants: NormalizationConstants = IMAGENET

    def to_dict(self) -> dict:
        return {
            "resize": list(self.resize),
            "crop": list(self.crop),
            "mean": list(self.constants.mean),
            "std": list(self.constants.std),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PreprocessSpec":
        return cls(
            resize=tuple(d["resize"]),
            crop=tuple(d["crop"]),
            constants=NormalizationConstants(tuple(d["mean"]), tuple(d["std"])),
        )


DEFAULT_PREPROCESS = PreprocessSpec()


def preprocess_unit(img: ImageTensor, spec: PreprocessSpec = DEFAULT_PREPROCESS) -> ImageTensor:
    """Resize/crop/scale only — the cacheable prefix of the chain, before normalize."""
    return scale_unit(center_crop(resize_bilinear(img, spec.resize), spec.crop))


def preprocess(img: ImageTensor, spec: PreprocessSpec = DEFAULT_PREPROCESS) -> ImageTensor:
    return normalize(preprocess_unit(img, spec), spec.constants)


# ---------------------------------------------------------------------------
# stochastic affine augmentation
# ---------------------------------------------------------------------------


class FillMode(Enum):
    CONSTANT = "constant"
    NEAREST = "nearest"


@dataclass(frozen=True)
class AugmentationSpec:
    """Parameter ranges for the sampled affine transform.

    rotation_range and shear_range are in degrees; zoom and the two shift
    ranges are fractions (shift fraction of the image dimension). Flips are
    applied with probability 0.5 each when enabled.
    """

    rotation_range: float = 0.0
    shear_range: float = 0.0
    zoom_range: float = 0.0
    width_shift_range: float = 0.0
    height_shift_range: float = 0.0
    horizontal_flip: bool = False
    vertical_flip: bool = False
    fill_mode: FillMode = FillMode.NEAREST
    cval: float = 0.0
    seed: int = 0

    def __post_init__(self):
        for name in ("rotation_range", "shear_range", "zoom_range",
                     "width_shift_range", "height_shift_range"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if not math.isfinite(self.cval):
            raise ValueError("cval must be finite")


AUG1 = AugmentationSpec(
    rotation_range=0.05, shear_range=0.05, zoom_range=0.05,
    horizontal_flip=True, vertical_flip=True, fill_mode=FillMode.NEAREST,
)
AUG2 = AugmentationSpec(
    rotation_range=3.0, width_shift_range=0.05, height_shift_range=0.05,
    shear_range=0.05, zoom_range=0.05, horizontal_flip=True, vertical_flip=True,
    fill_mode=FillMode.CONSTANT, cval=0.0,
)


@dataclass(frozen=True)
class AffineTransform:
    """One sampled transform: rotate -> shear -> zoom -> flips -> shift.

    Angles in degrees; shifts are fractions of width/height converted to
    pixels when applied; positive shifts move content right/down.
    """

    angle_deg: float = 0.0
    shear_deg: float = 0.0
    zoom: float = 1.0
    width_shift: float = 0.0
    height_shift: float = 0.0
    horizontal_flip: bool = False
    vertical_flip: bool = False

    def is_identity(self) -> bool:
        return (
            self.angle_deg == 0.0 and self.shear_deg == 0.0 and self.zoom == 1.0
            and self.width_shift == 0.0 and self.height_shift == 0.0
            and not self.horizontal_flip and not self.vertical_flip
        )

    def matrix(self):
        """Forward 2x2 matrix acting on image-center-relative (x, y) coordinates."""
        theta = math.radians(self.angle_deg)
        rot = np.array([[math.cos(theta), -math.sin(theta)],
                        [math.sin(theta), math.cos(theta)]])
        s = math.radians(self.shear_deg)
        shear = np.array([[1.0, -math.sin(s)], [0.0, math.cos(s)]])
        zoom = np.array([[self.zoom, 0.0], [0.0, self.zoom]])
        flip = np.array([[-1.0 if self.horizontal_flip else 1.0, 0.0],
                         [0.0, -1.0 if self.vertical_flip else 1.0]])
        return flip @ zoom @ shear @ rot


def sample_augmentation(spec: AugmentationSpec, rng: np.random.Generator) -> AffineTransform:
    """Draw one transform. The draw order is fixed so a seeded generator
    reproduces the same parameter sequence regardless of which ranges are zero."""
    angle = rng.uniform(-spec.rotation_range, spec.rotation_range)
    shear = rng.uniform(-spec.shear_range, spec.shear_range)
    zoom = rng.uniform(1.0 - spec.zoom_range, 1.0 + spec.zoom_range)
    wshift = rng.uniform(-spec.width_shift_range, spec.width_shift_range)
    hshift = rng.uniform(-spec.height_shift_range, spec.height_shift_range)
    hflip = bool(rng.random() < 0.5) and spec.horizontal_flip
    vflip = bool(rng.random() < 0.5) and spec.vertical_flip
    return AffineTransform(angle, shear, zoom, wshift, hshift, hflip, vflip)


def apply_affine(img: ImageTensor, t: AffineTransform,
                 fill_mode: FillMode = FillMode.NEAREST, cval: float = 0.0) -> ImageTensor:
    """Warp by the inverse-mapped affine transform with bilinear sampling."""
    if t.is_identity():
        return ImageTensor(img.data.copy(), img.range_tag)
    c, h, w = img.data.shape
    minv = np.linalg.inv(t.matrix())
    tx = t.width_shift * w
    ty = t.height_shift * h
    cx, cy = (w - 1) / 2.0, (h - 1) / 2.0

    ys, xs = np.meshgrid(np.arange(h, dtype=np.float64),
                         np.arange(w, dtype=np.float64), indexing="ij")
    xo = xs - cx - tx
    yo = ys - cy - ty
    xi = minv[0, 0] * xo + minv[0, 1] * yo + cx
    yi = minv[1, 0] * xo + minv[1, 1] * yo + cy

    if fill_mode is FillMode.NEAREST:
        xi = np.clip(xi, 0.0, w - 1.0)
        yi = np.clip(yi, 0.0, h - 1.0)

    x0 = np.floor(xi).astype(np.intp)
    y0 = np.floor(yi).astype(np.intp)
    fx = xi - x0
    fy = yi - y0
    out = np.empty_like(img.data)
    for dy in (0, 1):
        for dx in (0, 1):
            yy = y0 + dy
            xx = x0 + dx
            weight = (fy if dy else 1 - fy) * (fx if dx else 1 - fx)
            valid = (yy >= 0) & (yy < h) & (xx >= 0) & (xx < w)
            yyc = np.clip(yy, 0, h - 1)
            xxc = np.clip(xx, 0, w - 1)
            sample = img.data[:, yyc, xxc]
            if fill_mode is FillMode.CONSTANT:
                sample = np.where(valid[None, :, :], sample, cval)
            term = weight[None, :, :] * sample
            if dy == 0 and dx == 0:
                out[:] = term
            else:
                out += term
    return ImageTensor(out, img.range_tag)


def augment_image(img: ImageTensor, spec: AugmentationSpec,
                  rng: np.random.Generator) -> ImageTensor:
    return apply_affine(img, sample_augmentation(spec, rng), spec.fill_mode, spec.cval)


def augmentation_stream(spec: AugmentationSpec, epoch: int, image_index: int) -> np.random.Generator:
    """Per-image generator so augmentation is reproducible and order-independent."""
    return substream(spec.seed, "augment", epoch, image_index)


# ---------------------------------------------------------------------------
# XPB1 flat tensor container (disk format and gateway wire payload)
# ---------------------------------------------------------------------------

XPB_MAGIC = b"XPB1"
_XPB_HEADER = struct.Struct("<4sIII")  # magic, channels, height, width


def xpb_bytes(arr: np.ndarray) -> bytes:
    """Serialize one (c, h, w) tensor: 16-byte header + little-endian float32, C order."""
    arr = np.asarray(arr)
    if arr.ndim != 3:
        raise ValueError(f"expected a (c, h, w) tensor, got shape {arr.shape}")
    c, h, w = arr.shape
    header = _XPB_HEADER.pack(XPB_MAGIC, c, h, w)
    return header + np.ascontiguousarray(arr, dtype="<f4").tobytes()


def xpb_batch_bytes(batch: np.ndarray) -> bytes:
    """Concatenated XPB1 records, one per batch entry."""
    return b"".join(xpb_bytes(t) for t in batch)


def read_xpb(buf: bytes, offset: int = 0):
    """Parse one record; returns (float64 array, next offset)."""
    if len(buf) - offset < _XPB_HEADER.size:
        raise ProtocolError("truncated XPB1 header")
    magic, c, h, w = _XPB_HEADER.unpack_from(buf, offset)
    if magic != XPB_MAGIC:
        raise ProtocolError(f"bad XPB1 magic {magic!r}")
    count = c * h * w
    start = offset + _XPB_HEADER.size
    end = start + 4 * count
    if len(buf) < end:
        raise ProtocolError("truncated XPB1 payload")
    arr = np.frombuffer(buf, dtype="<f4", count=count, offset=start)
    return arr.reshape(c, h, w).astype(np.float64), end


def read_xpb_batch(buf: bytes) -> list:
    """Parse back-to-back XPB1 records until the buffer is exhausted."""
    out = []
    offset = 0
    while offset < len(buf):
        arr, offset = read_xpb(buf, offset)
        out.append(arr)
    return out
