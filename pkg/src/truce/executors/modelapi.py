"""Model-as-an-API topology: the dataset owner queries a remote endpoint.

The benchmark necessarily reaches the model owner sample by sample; the
record flags that. Any per-sample failure fails the whole request — a
partial accuracy on private data would be misleading.
"""

from __future__ import annotations

import json
import threading
import time
from fractions import Fraction
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Optional

import httpx

from ..core import Dataset, EvaluationRecord, MetricsRecord, infer_plaintext
from .errors import ExecutorError
from .flow import FlowTranscript
from .sources import InlineWeights, RemoteEndpoint


def run_model_api(
    request_id: str,
    ds: Dataset,
    endpoint: RemoteEndpoint,
    flow: Optional[FlowTranscript] = None,
    client: Optional[httpx.Client] = None,
) -> EvaluationRecord:
    """Query the endpoint once per sample; score locally at the dataset owner."""
    if len(ds) < 1:
        raise ExecutorError("empty dataset")
    own_client = client is None
    client = client or httpx.Client(timeout=30.0)
    headers = {"Authorization": f"Bearer {endpoint.credential}"}
    z = []
    comm = 0
    start = time.perf_counter()
    try:
        for p in ds.points:
            body = json.dumps({"input": list(p.input)}).encode()
            try:
                resp = client.post(endpoint.url, content=body, headers=headers)
                resp.raise_for_status()
                pred = resp.json()["class"]
            except (httpx.HTTPError, ValueError, KeyError) as e:
                raise ExecutorError(f"inference endpoint failure: {e}") from e
            if not isinstance(pred, int) or not (0 <= pred < ds.num_classes):
                raise ExecutorError(f"endpoint returned out-of-range class {pred!r}")
            comm += len(body) + len(resp.content)
            if flow is not None:
                flow.record("dataset_owner", "model_owner", "dataset", len(body))
                flow.record("model_owner", "dataset_owner", "prediction", len(resp.content))
            z.append(int(pred == p.label))
    finally:
        if own_client:
            client.close()
    elapsed = time.perf_counter() - start
    t = len(ds)
    rec = EvaluationRecord(
        request_id=request_id,
        trust_mode="model_api",
        accuracy=Fraction(sum(z), t),
        metrics=MetricsRecord(
            time_per_sample_s=elapsed / t, num_samples=t, total_communication_bytes=comm
        ),
        per_sample_outcomes=tuple(z),
        flags={"benchmark_revealed_to_model_owner": True},
    )
    if flow is not None:
        flow.record("dataset_owner", "platform", "record", len(json.dumps(rec.to_json())))
    return rec


class StubModelServer:
    """Local HTTP server wrapping plaintext inference, for tests and demos.

    POST /infer {"input": [floats]} -> {"class": int}, bearer-token auth.
    """

    def __init__(self, model: InlineWeights, credential: str = "stub-token", latency_s: float = 0.0):
        self.model = model
        self.credential = credential
        self.latency_s = latency_s
        outer = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):
                if self.path != "/infer":
                    self.send_error(404)
                    return
                if self.headers.get("Authorization") != f"Bearer {outer.credential}":
                    self.send_error(401)
                    return
                length = int(self.headers.get("Content-Length", 0))
                try:
                    obj = json.loads(self.rfile.read(length))
                    from truce.core import DataPoint

                    point = DataPoint(tuple(obj["input"]), 0).quantized(outer.model.cfg)
                    pred = infer_plaintext(
                        outer.model.spec, outer.model.weights, point, outer.model.cfg
                    )
                except (ValueError, KeyError) as e:
                    self.send_error(400, str(e))
                    return
                if outer.latency_s:
                    time.sleep(outer.latency_s)
                body = json.dumps({"class": pred}).encode()
                self.send_response(200)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(body)))
                self.end_headers()
                self.wfile.write(body)

            def log_message(self, *args):
                pass

        self._server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)

    @property
    def url(self) -> str:
        host, port = self._server.server_address
        return f"http://{host}:{port}/infer"

    def endpoint(self) -> RemoteEndpoint:
        return RemoteEndpoint(self.url, self.credential, self.model.spec.num_classes)

    def __enter__(self):
        self._thread.start()
        return self

    def __exit__(self, *exc):
        self._server.shutdown()
        self._server.server_close()
