"""Checkpoint container: JSON header + little-endian float32 parameter blobs.

Layout:
    bytes 0..3   magic "XCK1"
    bytes 4..7   u32 header length (little-endian)
    header       UTF-8 JSON: layers, input shape, frozen names, seed,
                 step counter, class names, preprocess spec, param order
    body         float32 LE arrays concatenated in header["param_order"]
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .. import imaging
from ..errors import ProtocolError
from .layers import LayerSpec
from .network import Network

MAGIC = b"XCK1"
FORMAT_VERSION = 1


def save_checkpoint(path, net: Network, class_names, seed: int = 0,
                    step_count: int = 0, preprocess: imaging.PreprocessSpec = None,
                    params: dict = None):
    params = params if params is not None else net.params
    param_order = []
    blobs = []
    for spec in net.layers:
        if spec.name in params:
            for slot in ("w", "b"):
                arr = np.ascontiguousarray(params[spec.name][slot], dtype="<f4")
                param_order.append([spec.name, slot, list(arr.shape)])
                blobs.append(arr.tobytes())
    header = {
        "format": FORMAT_VERSION,
        "layers": [s.to_dict() for s in net.layers],
        "input_shape": list(net.input_shape),
        "frozen": sorted(n for n, f in net.frozen.items() if f),
        "seed": seed,
        "step_count": step_count,
        "class_names": list(class_names),
        "preprocess": preprocess.to_dict() if preprocess is not None else None,
        "param_order": param_order,
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(header_bytes)))
        fh.write(header_bytes)
        for blob in blobs:
            fh.write(blob)


def load_checkpoint(path):
    """Returns (network, meta dict with class_names/seed/step_count/preprocess)."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != MAGIC:
        raise ProtocolError(f"not a checkpoint file: bad magic {raw[:4]!r}")
    (header_len,) = struct.unpack_from("<I", raw, 4)
    header = json.loads(raw[8 : 8 + header_len].decode("utf-8"))
    if header.get("format") != FORMAT_VERSION:
        raise ProtocolError(f"unsupported checkpoint format {header.get('format')!r}")

    layers = [LayerSpec.from_dict(d) for d in header["layers"]]
    net = Network(layers, tuple(header["input_shape"]), seed=0)
    offset = 8 + header_len
    for name, slot, shape in header["param_order"]:
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(raw, dtype="<f4", count=count, offset=offset)
        offset += 4 * count
        net.params[name][slot] = arr.reshape(shape).astype(np.float64)
    for name in header["frozen"]:
        net.set_frozen(name, True)

    pre = header.get("preprocess")
    meta = {
        "class_names": header["class_names"],
        "seed": header["seed"],
        "step_count": header["step_count"],
        "preprocess": imaging.PreprocessSpec.from_dict(pre) if pre else None,
    }
    return net, meta
