"""Threaded TCP server speaking the oracle protocol.

One request in flight per connection; model calls are serialized by a
global lock so several decode sessions can share one backend.  Protocol
errors are reported and the connection stays alive; backend failures
are reported and the connection closes.
"""

from __future__ import annotations

import logging
import socketserver
import threading

from .backends import BackendError
from .protocol import ProtocolError, encode_record, decode_line, parse_hello, parse_request

log = logging.getLogger("dawn_server")


class OracleRequestHandler(socketserver.StreamRequestHandler):
    def handle(self) -> None:
        session = None
        prompt_len = None
        gen_len = None
        while True:
            line = self.rfile.readline()
            if not line:
                return
            req_id = None
            try:
                record = decode_line(line.decode("utf-8", errors="replace"))
                kind = record.get("type")
                if kind == "hello":
                    hello = parse_hello(record)
                    session = hello["session"]
                    prompt_len = hello["prompt_len"]
                    gen_len = hello["gen_len"]
                    self._send(dict(record, type="hello_ack",
                                    vocab_size=self.server.backend.vocab_size))
                    continue
                if kind == "req":
                    if session is None:
                        raise ProtocolError("req before hello")
                    if isinstance(record.get("id"), int):
                        req_id = record["id"]
                    parsed_id, tokens = parse_request(record, prompt_len, gen_len)
                    with self.server.model_lock:
                        top1, conf, attn = self.server.backend.predict(tokens, prompt_len)
                    self._send({
                        "type": "resp",
                        "id": parsed_id,
                        "top1": [int(t) for t in top1],
                        "conf": [float(c) for c in conf],
                        "attn": [[float(a) for a in row] for row in attn],
                    })
                    continue
                raise ProtocolError(f"unknown record type {kind!r}")
            except ProtocolError as exc:
                log.warning("protocol error: %s", exc)
                self._send({"type": "error", "id": req_id,
                            "code": "protocol", "message": str(exc)})
            except BackendError as exc:
                log.error("backend error: %s", exc)
                self._send({"type": "error", "id": req_id,
                            "code": "model", "message": str(exc)})
                return

    def _send(self, record: dict) -> None:
        self.wfile.write((encode_record(record) + "\n").encode("utf-8"))
        self.wfile.flush()


class OracleServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, address: tuple[str, int], backend):
        super().__init__(address, OracleRequestHandler)
        self.backend = backend
        self.model_lock = threading.Lock()

    def serve_in_thread(self) -> threading.Thread:
        thread = threading.Thread(target=self.serve_forever, daemon=True)
        thread.start()
        return thread