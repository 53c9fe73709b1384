"""Local HTTP embedding endpoint for tests.

Serves deterministic vectors derived from sha256(text); the client is
expected to normalize them. Tracks request payloads, auth headers, and
peak concurrent in-flight requests, and can fail the first N requests
with a 503 to exercise retry logic.
"""

from __future__ import annotations

import hashlib
import json
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer


def raw_vector(text, d):
    # one byte per coordinate, shifted off zero so the norm is positive
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    need = (d + 31) // 32
    blob = (digest * need)[:d]
    return [b / 255.0 + 0.01 for b in blob]


class EmbedServer:
    def __init__(self, d=8, fail_first=0, fail_code=503, delay=0.0):
        self.d = d
        self.fail_first = fail_first
        self.fail_code = fail_code
        self.delay = delay
        self.lock = threading.Lock()
        self.requests = []
        self.auth_headers = []
        self.inflight = 0
        self.max_inflight = 0
        self.failures_left = fail_first

        server = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, *args):
                pass

            def do_POST(self):
                length = int(self.headers.get("Content-Length", 0))
                payload = json.loads(self.rfile.read(length))
                with server.lock:
                    server.requests.append(payload)
                    server.auth_headers.append(self.headers.get("Authorization"))
                    server.inflight += 1
                    server.max_inflight = max(server.max_inflight, server.inflight)
                    fail = server.failures_left > 0
                    if fail:
                        server.failures_left -= 1
                try:
                    if server.delay:
                        time.sleep(server.delay)
                    if fail:
                        self.send_response(server.fail_code)
                        self.end_headers()
                        self.wfile.write(b"busy")
                        return
                    data = [{"embedding": raw_vector(t, server.d)}
                            for t in payload["input"]]
                    body = json.dumps({"data": data}).encode("utf-8")
                    self.send_response(200)
                    self.send_header("Content-Type", "application/json")
                    self.send_header("Content-Length", str(len(body)))
                    self.end_headers()
                    self.wfile.write(body)
                finally:
                    with server.lock:
                        server.inflight -= 1

        self.httpd = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self.thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)

    @property
    def url(self):
        host, port = self.httpd.server_address
        return f"http://{host}:{port}/embed"

    def __enter__(self):
        self.thread.start()
        return self

    def __exit__(self, *exc):
        self.httpd.shutdown()
        self.httpd.server_close()

    def batch_sizes(self):
        return [len(p["input"]) for p in self.requests]
