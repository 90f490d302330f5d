import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np
import pytest


class StubProvider:
    """Minimal in-process embedding provider speaking the /v1/embed protocol.

    Vectors are a deterministic function of the text so tests can assert
    ordering and reproducibility. Failures can be injected to exercise the
    client's retry logic.
    """

    def __init__(self, dim=8):
        self.dim = dim
        self.requests = []
        self.fail_next = 0          # respond 500 this many times
        self.refuse_payload = None  # if set, respond 400 with this message
        self.dim_per_request = None # list of dims to cycle through

        provider = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, *args):
                pass

            def do_POST(self):
                if self.path != "/v1/embed":
                    self.send_error(404)
                    return
                length = int(self.headers["Content-Length"])
                body = json.loads(self.rfile.read(length))
                provider.requests.append(body)
                if provider.fail_next > 0:
                    provider.fail_next -= 1
                    self._reply(500, {"detail": "transient"})
                    return
                if provider.refuse_payload is not None:
                    self._reply(400, {"detail": provider.refuse_payload})
                    return
                dim = provider.dim
                if provider.dim_per_request:
                    dim = provider.dim_per_request[
                        (len(provider.requests) - 1) % len(provider.dim_per_request)]
                vectors = [provider.vector_for(t, dim) for t in body["texts"]]
                self._reply(200, {"dim": dim, "vectors": vectors,
                                  "model_revision": "stub-1"})

            def _reply(self, status, payload):
                data = json.dumps(payload).encode()
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

        self.server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self.thread = threading.Thread(target=self.server.serve_forever, daemon=True)
        self.thread.start()

    @staticmethod
    def vector_for(text, dim):
        rng = np.random.RandomState(abs(hash(text)) % (2 ** 31))
        return rng.normal(size=dim).round(6).tolist()

    @property
    def url(self):
        host, port = self.server.server_address
        return f"http://{host}:{port}"

    def close(self):
        self.server.shutdown()
        self.server.server_close()


@pytest.fixture
def provider():
    p = StubProvider()
    yield p
    p.close()
