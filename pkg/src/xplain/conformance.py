"""Golden-request conformance checks for /v1 prediction endpoints.

Any server claiming to speak the gateway protocol must pass these checks
unmodified. They are transport-level only: fixed seeded request payloads,
structural response assertions, and the error/deduplication contracts. Run
them from code via :func:`run_protocol_checks` or against a live server:

    python -m xplain.conformance http://localhost:8100
"""

from __future__ import annotations

import uuid
from dataclasses import dataclass

import numpy as np
import requests

from .errors import ProtocolError
from .imaging import xpb_batch_bytes
from .rng import substream

GOLDEN_SEED = 20_240


@dataclass
class CheckResult:
    name: str
    ok: bool
    detail: str = ""


def golden_batch(input_shape, n: int = 2, seed: int = GOLDEN_SEED) -> np.ndarray:
    """Deterministic pseudo-image batch in roughly normalized range."""
    rng = substream(seed, "golden")
    return rng.standard_normal((n, *input_shape))


def run_protocol_checks(base_url: str, timeout: float = 30.0, session=None) -> list:
    """Run every golden check against a live endpoint; returns CheckResults."""
    http = session if session is not None else requests
    base = base_url.rstrip("/")
    results = []

    def record(name, ok, detail=""):
        results.append(CheckResult(name, bool(ok), detail))

    # --- meta -----------------------------------------------------------
    meta = None
    try:
        reply = http.get(f"{base}/v1/meta", timeout=timeout)
        ok = reply.status_code == 200
        meta = reply.json() if ok else None
        record("meta_status", ok, f"status {reply.status_code}")
    except Exception as exc:  # noqa: BLE001
        record("meta_status", False, str(exc))
    if meta is None:
        record("aborted", False, "cannot continue without /v1/meta")
        return results

    has_fields = all(k in meta for k in ("class_names", "input_shape", "model"))
    record("meta_fields", has_fields, f"keys {sorted(meta)}")
    shape_ok = isinstance(meta.get("input_shape"), list) and len(meta["input_shape"]) == 3
    record("meta_input_shape", shape_ok, f"input_shape {meta.get('input_shape')}")
    if not (has_fields and shape_ok):
        return results
    input_shape = tuple(int(v) for v in meta["input_shape"])
    num_classes = len(meta["class_names"])

    def predict(body, request_id=None):
        headers = {"Content-Type": "application/octet-stream",
                   "X-Request-Id": request_id or uuid.uuid4().hex}
        return http.post(f"{base}/v1/predict", data=body, headers=headers, timeout=timeout)

    # --- golden 2-image batch --------------------------------------------
    batch = golden_batch(input_shape, n=2)
    body = xpb_batch_bytes(batch)
    reply = predict(body)
    record("predict_status", reply.status_code == 200, f"status {reply.status_code}")
    probs = None
    if reply.status_code == 200:
        payload = reply.json()
        record("predict_has_probs_and_model",
               "probs" in payload and "model" in payload, f"keys {sorted(payload)}")
        probs = np.asarray(payload.get("probs", []), dtype=np.float64)
        record("predict_row_count", probs.ndim == 2 and probs.shape == (2, num_classes),
               f"shape {probs.shape}")
        if probs.ndim == 2 and probs.size:
            sums = probs.sum(axis=1)
            record("predict_rows_sum_to_one", np.all(np.abs(sums - 1.0) <= 1e-5),
                   f"sums {sums.tolist()}")
            record("predict_rows_nonnegative", np.all(probs >= -1e-5), "")

    # --- malformed magic -> 400 ------------------------------------------
    bad = b"NOPE" + body[4:]
    reply = predict(bad)
    record("malformed_magic_400", reply.status_code == 400, f"status {reply.status_code}")

    # --- wrong tensor shape -> 422 ----------------------------------------
    wrong = golden_batch((input_shape[0], input_shape[1] + 1, input_shape[2]), n=1)
    reply = predict(xpb_batch_bytes(wrong))
    record("shape_mismatch_422", reply.status_code == 422, f"status {reply.status_code}")

    # --- request-id deduplication ------------------------------------------
    # same id with a different payload must return the cached first answer
    rid = uuid.uuid4().hex
    first = predict(body, request_id=rid)
    second = predict(xpb_batch_bytes(golden_batch(input_shape, n=2, seed=GOLDEN_SEED + 1)),
                     request_id=rid)
    dedup_ok = (
        first.status_code == 200 and second.status_code == 200
        and np.allclose(np.asarray(first.json()["probs"]), np.asarray(second.json()["probs"]),
                        atol=1e-9)
    )
    record("request_id_deduplicated", dedup_ok, "")

    return results


def assert_conformant(base_url: str, timeout: float = 30.0, session=None):
    results = run_protocol_checks(base_url, timeout=timeout, session=session)
    failures = [r for r in results if not r.ok]
    if failures:
        lines = "; ".join(f"{r.name}: {r.detail}" for r in failures)
        raise ProtocolError(f"endpoint {base_url} failed conformance: {lines}")
    return results


def main(argv=None) -> int:
    import argparse

    parser = argparse.ArgumentParser(description="check a /v1 endpoint against the golden request suite")
    parser.add_argument("url")
    parser.add_argument("--timeout", type=float, default=30.0)
    args = parser.parse_args(argv)
    results = run_protocol_checks(args.url, timeout=args.timeout)
    width = max(len(r.name) for r in results)
    for r in results:
        print(f"{'PASS' if r.ok else 'FAIL'}  {r.name:<{width}}  {r.detail}")
    return 0 if all(r.ok for r in results) else 1


if __name__ == "__main__":
    raise SystemExit(main())
