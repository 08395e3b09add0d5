"""In-process HTTP server implementing the /v1 prediction protocol.

Used to test the gateway client and the conformance suite without the real
serving stack. Supports request-id deduplication and fault injection
(drop or 500 the first N requests) to exercise the retry path.
"""

import json
import struct
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np

HEADER = struct.Struct("<4sIII")


def parse_xpb_batch(body, expected_shape):
    """Returns (list of arrays, error) where error is (status, message)."""
    tensors = []
    offset = 0
    while offset < len(body):
        if len(body) - offset < HEADER.size:
            return None, (400, "truncated header")
        magic, c, h, w = HEADER.unpack_from(body, offset)
        if magic != b"XPB1":
            return None, (400, f"bad magic {magic!r}")
        end = offset + HEADER.size + 4 * c * h * w
        if len(body) < end:
            return None, (400, "truncated payload")
        if (c, h, w) != tuple(expected_shape):
            return None, (422, f"tensor shape {(c, h, w)} != {tuple(expected_shape)}")
        arr = np.frombuffer(body, dtype="<f4", count=c * h * w,
                            offset=offset + HEADER.size).reshape(c, h, w)
        tensors.append(arr.astype(np.float64))
        offset = end
    if not tensors:
        return None, (400, "empty batch")
    return tensors, None


class MockModelServer:
    """Serves a deterministic fake model: softmax over per-class spatial means."""

    def __init__(self, input_shape=(3, 8, 8), class_names=("a", "b", "c", "d"),
                 model_id="mock-v1", fail_first=0, fixed_row=None):
        self.input_shape = tuple(input_shape)
        self.class_names = list(class_names)
        self.model_id = model_id
        self.fail_first = fail_first  # 500 the first N /v1/predict calls
        self.fixed_row = fixed_row
        self.eval_count = 0  # logical model evaluations (dedup hits excluded)
        self.request_count = 0
        self._cache = {}
        self._lock = threading.Lock()
        outer = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, *args):
                pass

            def _send(self, status, payload: dict):
                body = json.dumps(payload).encode()
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(body)))
                self.end_headers()
                self.wfile.write(body)

            def do_GET(self):
                if self.path == "/v1/meta":
                    self._send(200, {
                        "class_names": outer.class_names,
                        "input_shape": list(outer.input_shape),
                        "model": outer.model_id,
                    })
                else:
                    self._send(404, {"error": "not found"})

            def do_POST(self):
                if self.path != "/v1/predict":
                    self._send(404, {"error": "not found"})
                    return
                length = int(self.headers.get("Content-Length", "0"))
                body = self.rfile.read(length)
                rid = self.headers.get("X-Request-Id", "")
                with outer._lock:
                    outer.request_count += 1
                    if outer.fail_first > 0:
                        outer.fail_first -= 1
                        self._send(500, {"error": "injected failure"})
                        return
                    if rid and rid in outer._cache:
                        self._send(200, outer._cache[rid])
                        return
                    tensors, err = parse_xpb_batch(body, outer.input_shape)
                    if err:
                        self._send(err[0], {"error": err[1]})
                        return
                    outer.eval_count += 1
                    probs = [outer._predict(t) for t in tensors]
                    payload = {"probs": probs, "model": outer.model_id}
                    if rid:
                        outer._cache[rid] = payload
                    self._send(200, payload)

        self._server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)

    def _predict(self, tensor):
        if self.fixed_row is not None:
            return list(self.fixed_row)
        c = len(self.class_names)
        means = np.array([tensor[k % tensor.shape[0]].mean() * (k + 1) for k in range(c)])
        e = np.exp(means - means.max())
        return (e / e.sum()).tolist()

    @property
    def url(self):
        host, port = self._server.server_address
        return f"http://{host}:{port}"

    def __enter__(self):
        self._thread.start()
        return self

    def __exit__(self, *exc):
        self._server.shutdown()
        self._server.server_close()
