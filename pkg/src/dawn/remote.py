"""Client side of the model-oracle wire protocol.

Transport is a stream socket carrying newline-delimited JSON records,
UTF-8, one record per line, one request in flight per connection.
Floats are serialized with 9 significant digits, comfortably inside the
1e-5 row-sum tolerance.  A masked slot travels as the sentinel -1.

Session open (client first):

    {"type": "hello", "session": S, "prompt_len": P, "gen_len": L,
     "attn_layers": K}
    {"type": "hello_ack", "session": S, "prompt_len": P, "gen_len": L,
     "attn_layers": K, "vocab_size": V}

The ack is the complete handshake record; the server fills vocab_size
and echoes the rest.  Per decode step:

    {"type": "req", "id": N, "prompt_len": P, "tokens": [...]}   # P+L ints
    {"type": "resp", "id": N, "top1": [...], "conf": [...],
     "attn": [[...], ...]}                                       # n x n rows

Ids are monotone per connection and must be echoed.  Failures arrive as
{"type": "error", "id": N-or-null, "code": C, "message": M}; after a
protocol error the connection stays usable, after a model error the
server closes it.  Every response is validated here with the same
checks the toy oracle's outputs satisfy (shapes, [0,1] ranges, row sums
within 1e-5, fixed positions at confidence exactly 1.0).
"""

from __future__ import annotations

import json
import math
import socket
import uuid

import numpy as np

from .core import (
    MASK_SENTINEL,
    DecodeState,
    DimensionMismatch,
    OracleUnavailable,
    ProtocolViolation,
    StepPrediction,
    validate_prediction,
)


def encode_record(record: dict) -> str:
    """One-line JSON with floats at 9 significant digits."""
    return _fmt(record)


def _fmt(v) -> str:
    if isinstance(v, dict):
        return "{" + ",".join(f"{json.dumps(k)}:{_fmt(x)}" for k, x in v.items()) + "}"
    if isinstance(v, (list, tuple)):
        return "[" + ",".join(_fmt(x) for x in v) + "]"
    if isinstance(v, bool) or v is None or isinstance(v, (int, str)):
        return json.dumps(v)
    if isinstance(v, float):
        if not math.isfinite(v):
            raise ProtocolViolation(f"non-finite float {v!r} in record")
        return f"{v:.9g}"
    raise ProtocolViolation(f"unserializable value of type {type(v).__name__}")


def decode_record(line: str) -> dict:
    try:
        record = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ProtocolViolation(f"not a JSON record: {exc}") from None
    if not isinstance(record, dict) or "type" not in record:
        raise ProtocolViolation("record must be an object with a 'type' field")
    return record


class RemoteOracle:
    """Drives a served model through the wire protocol.

    The seed argument of ``query`` is accepted for interface parity and
    ignored; determinism across repeats is the server's contract.
    """

    def __init__(self, host: str, port: int, prompt: tuple[int, ...] | list[int],
                 gen_length: int, attn_layers: int, session: str | None = None,
                 timeout: float = 30.0):
        self.prompt = tuple(int(t) for t in prompt)
        self.gen_length = gen_length
        self.session = session or uuid.uuid4().hex[:12]
        self._next_id = 0
        try:
            self._sock = socket.create_connection((host, port), timeout=timeout)
        except OSError as exc:
            raise OracleUnavailable(f"cannot connect to {host}:{port}: {exc}") from None
        self._fh = self._sock.makefile("rwb")
        ack = self._roundtrip({
            "type": "hello",
            "session": self.session,
            "prompt_len": len(self.prompt),
            "gen_len": gen_length,
            "attn_layers": attn_layers,
        })
        if ack.get("type") != "hello_ack":
            raise ProtocolViolation(f"expected hello_ack, got {ack.get('type')!r}")
        if ack.get("session") != self.session:
            raise ProtocolViolation("hello_ack for a different session")
        try:
            self.vocab_size = int(ack["vocab_size"])
        except (KeyError, TypeError, ValueError):
            raise ProtocolViolation("hello_ack is missing a usable vocab_size") from None

    def _roundtrip(self, record: dict) -> dict:
        try:
            self._fh.write((encode_record(record) + "\n").encode("utf-8"))
            self._fh.flush()
            line = self._fh.readline()
        except OSError as exc:
            raise OracleUnavailable(f"transport failure: {exc}") from None
        if not line:
            raise OracleUnavailable("server closed the connection")
        reply = decode_record(line.decode("utf-8"))
        if reply.get("type") == "error":
            code = reply.get("code", "unknown")
            message = reply.get("message", "")
            if code == "protocol":
                raise ProtocolViolation(f"server rejected the record: {message}")
            raise OracleUnavailable(f"server error [{code}]: {message}")
        return reply

    def query(self, state: DecodeState, seed: int) -> StepPrediction:
        if not state.has_masked():
            raise ValueError("state has no masked slot")
        req_id = self._next_id
        self._next_id += 1
        tokens = list(self.prompt) + [
            MASK_SENTINEL if t is None else int(t) for t in state.response
        ]
        reply = self._roundtrip({
            "type": "req",
            "id": req_id,
            "prompt_len": len(self.prompt),
            "tokens": tokens,
        })
        if reply.get("type") != "resp":
            raise ProtocolViolation(f"expected resp, got {reply.get('type')!r}")
        if reply.get("id") != req_id:
            raise ProtocolViolation(
                f"response id {reply.get('id')!r} does not match pending request {req_id}"
            )
        try:
            top1 = np.asarray(reply["top1"], dtype=np.int64)
            conf = np.asarray(reply["conf"], dtype=np.float64)
            attn = np.asarray(reply["attn"], dtype=np.float64)
        except (KeyError, TypeError, ValueError) as exc:
            raise DimensionMismatch(f"malformed response arrays: {exc}") from None
        if attn.ndim != 2:
            raise DimensionMismatch(f"attn must be a matrix, got ndim={attn.ndim}")
        pred = StepPrediction(top1=top1, confidence=conf, attention=attn)
        validate_prediction(pred, state)
        return pred

    def close(self) -> None:
        try:
            self._fh.close()
            self._sock.close()
        except OSError:
            pass

    def __enter__(self) -> "RemoteOracle":
        return self

    def __exit__(self, *exc) -> None:
        self.close()
