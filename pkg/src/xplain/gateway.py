"""One black-box classifier interface over two backends.

Native handles wrap an in-process network (gradients and feature maps
available); remote handles speak the HTTP protocol below and expose
probabilities only:

    POST {url}/v1/predict   body: concatenated XPB1 records,
                            header X-Request-Id: unique per logical request
                            reply: {"probs": [[...], ...], "model": "..."}
    GET  {url}/v1/meta      reply: {"class_names": [...],
                                    "input_shape": [c, h, w], "model": "..."}

Retries reuse the request id; a conforming server deduplicates ids, so a
logical request is evaluated once no matter how often the transport flakes.
"""

from __future__ import annotations

import os
import time
import uuid
from dataclasses import dataclass, field

import numpy as np
import requests

from . import imaging
from .errors import ProtocolError, RemoteUnavailable, ShapeMismatch
from .nnet import Network, forward

ENV_MODEL_URL = "XPLAIN_MODEL_URL"

REMOTE_BATCH_CAP = 64
RETRY_BACKOFFS = (0.1, 0.4, 1.6)
PROB_ROW_TOL = 1e-5


@dataclass
class NativeBackend:
    network: Network


@dataclass
class RemoteBackend:
    url: str
    timeout: float = 10.0
    backoffs: tuple = RETRY_BACKOFFS
    batch_cap: int = REMOTE_BATCH_CAP
    session: object = None

    def http(self):
        return self.session if self.session is not None else requests


@dataclass
class ModelHandle:
    backend: object
    class_names: list
    input_shape: tuple
    constants: imaging.NormalizationConstants = imaging.IMAGENET
    model_id: str = "model"

    @property
    def has_gradients(self) -> bool:
        return isinstance(self.backend, NativeBackend)

    @property
    def has_feature_maps(self) -> bool:
        return isinstance(self.backend, NativeBackend)

    @property
    def num_classes(self) -> int:
        return len(self.class_names)


def native_handle(net: Network, class_names,
                  constants: imaging.NormalizationConstants = imaging.IDENTITY,
                  model_id: str = "native") -> ModelHandle:
    if len(class_names) != net.num_classes:
        raise ValueError(
            f"{len(class_names)} class names for a {net.num_classes}-way network"
        )
    return ModelHandle(NativeBackend(net), list(class_names), net.input_shape,
                       constants=constants, model_id=model_id)


def default_remote_url() -> str:
    url = os.environ.get(ENV_MODEL_URL, "")
    if not url:
        raise ProtocolError(f"no remote url given and {ENV_MODEL_URL} is unset")
    return url


def remote_handle(url: str = None, timeout: float = 10.0,
                  constants: imaging.NormalizationConstants = imaging.IMAGENET,
                  session=None) -> ModelHandle:
    """Build a handle from the endpoint's /v1/meta reply."""
    backend = RemoteBackend((url or default_remote_url()).rstrip("/"),
                            timeout=timeout, session=session)
    meta = _get_meta(backend)
    return ModelHandle(backend, list(meta["class_names"]), tuple(meta["input_shape"]),
                       constants=constants, model_id=str(meta.get("model", "remote")))


def _get_meta(backend: RemoteBackend) -> dict:
    reply = _with_retries(
        backend, lambda: backend.http().get(f"{backend.url}/v1/meta", timeout=backend.timeout)
    )
    meta = reply.json()
    for key in ("class_names", "input_shape"):
        if key not in meta:
            raise ProtocolError(f"/v1/meta reply missing {key!r}")
    if len(meta["input_shape"]) != 3:
        raise ProtocolError(f"/v1/meta input_shape must be [c, h, w], got {meta['input_shape']}")
    return meta


def _with_retries(backend: RemoteBackend, do_request):
    last = None
    for attempt in range(len(backend.backoffs) + 1):
        try:
            reply = do_request()
        except requests.RequestException as exc:
            last = exc
        else:
            if reply.status_code >= 500:
                last = ProtocolError(f"server error {reply.status_code}")
            elif reply.status_code >= 400:
                raise ProtocolError(f"endpoint rejected request: {reply.status_code} {reply.text[:200]}")
            else:
                return reply
        if attempt < len(backend.backoffs):
            time.sleep(backend.backoffs[attempt])
    raise RemoteUnavailable(f"remote endpoint unreachable after retries: {last}")


def _predict_remote_chunk(backend: RemoteBackend, chunk: np.ndarray) -> np.ndarray:
    body = imaging.xpb_batch_bytes(chunk)
    request_id = uuid.uuid4().hex  # stable across retries of this chunk

    def do_request():
        return backend.http().post(
            f"{backend.url}/v1/predict",
            data=body,
            headers={"Content-Type": "application/octet-stream",
                     "X-Request-Id": request_id},
            timeout=backend.timeout,
        )

    reply = _with_retries(backend, do_request)
    try:
        payload = reply.json()
        probs = np.asarray(payload["probs"], dtype=np.float64)
    except (ValueError, KeyError, TypeError) as exc:
        raise ProtocolError(f"malformed /v1/predict reply: {exc}") from exc
    if probs.ndim != 2 or probs.shape[0] != len(chunk):
        raise ProtocolError(f"expected {len(chunk)} probability rows, got shape {probs.shape}")
    return probs


def _validate_rows(probs: np.ndarray, num_classes: int):
    if probs.shape[1] != num_classes:
        raise ProtocolError(f"expected {num_classes} columns, got {probs.shape[1]}")
    if np.any(probs < -PROB_ROW_TOL):
        raise ProtocolError("negative probabilities in reply")
    sums = probs.sum(axis=1)
    if np.any(np.abs(sums - 1.0) > PROB_ROW_TOL):
        raise ProtocolError(f"probability rows do not sum to 1 (worst {sums[np.argmax(np.abs(sums-1))]:.6f})")


def predict_batch(handle: ModelHandle, batch: np.ndarray) -> np.ndarray:
    """Batch of normalized (c, h, w) tensors -> (N, C) probability rows."""
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim == 3:
        batch = batch[None]
    if batch.ndim != 4 or tuple(batch.shape[1:]) != tuple(handle.input_shape):
        raise ShapeMismatch(
            f"batch shape {batch.shape[1:]} != model input {tuple(handle.input_shape)}"
        )
    if isinstance(handle.backend, NativeBackend):
        probs = forward(handle.backend.network, batch).probs
    else:
        cap = handle.backend.batch_cap
        parts = [
            _predict_remote_chunk(handle.backend, batch[s : s + cap])
            for s in range(0, len(batch), cap)
        ]
        probs = np.concatenate(parts, axis=0)
    _validate_rows(probs, handle.num_classes)
    return probs


def top_class(handle: ModelHandle, image: np.ndarray):
    """(class index, probability) with lowest-index tie-break."""
    probs = predict_batch(handle, np.asarray(image)[None])[0]
    idx = int(np.argmax(probs))  # argmax returns the first maximum
    return idx, float(probs[idx])


def normalize_unit_batch(handle: ModelHandle, batch_unit: np.ndarray) -> np.ndarray:
    """Apply the handle's normalization constants to unit-scale images."""
    mean = np.asarray(handle.constants.mean)[None, :, None, None]
    std = np.asarray(handle.constants.std)[None, :, None, None]
    return (np.asarray(batch_unit, dtype=np.float64) - mean) / std


def predict_unit(handle: ModelHandle, batch_unit: np.ndarray) -> np.ndarray:
    return predict_batch(handle, normalize_unit_batch(handle, batch_unit))
