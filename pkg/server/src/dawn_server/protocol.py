"""Server side of the oracle wire protocol.

Newline-delimited JSON over a stream socket, UTF-8, one record per
line, one request in flight per connection.  Floats are written with 9
significant digits.  Masked slots arrive as the sentinel -1.

    client: {"type": "hello", "session": S, "prompt_len": P,
             "gen_len": L, "attn_layers": K}
    server: {"type": "hello_ack", ...same fields..., "vocab_size": V}

    client: {"type": "req", "id": N, "prompt_len": P, "tokens": [...]}
    server: {"type": "resp", "id": N, "top1": [...], "conf": [...],
             "attn": [[...], ...]}

Failures are {"type": "error", "id": N-or-null, "code": C,
"message": M}.  code "protocol" keeps the connection alive; code
"model" is followed by a close.
"""

from __future__ import annotations

import json
import math

MASK_SENTINEL = -1


class ProtocolError(Exception):
    """Client sent something the protocol does not allow."""


def encode_record(record: dict) -> str:
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
            raise ValueError(f"non-finite float {v!r} in outgoing record")
        return f"{v:.9g}"
    # numpy scalars and anything else with a clean float/int view
    if hasattr(v, "item"):
        return _fmt(v.item())
    raise ValueError(f"unserializable value of type {type(v).__name__}")


def decode_line(line: str) -> dict:
    try:
        record = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ProtocolError(f"not a JSON record: {exc}") from None
    if not isinstance(record, dict) or "type" not in record:
        raise ProtocolError("record must be an object with a 'type' field")
    return record


def parse_hello(record: dict) -> dict:
    out = {}
    for field in ("session", "prompt_len", "gen_len", "attn_layers"):
        if field not in record:
            raise ProtocolError(f"hello is missing field '{field}'")
        out[field] = record[field]
    for field in ("prompt_len", "gen_len", "attn_layers"):
        if not isinstance(out[field], int) or out[field] < 0:
            raise ProtocolError(f"hello field '{field}' must be a non-negative integer")
    if out["gen_len"] < 1:
        raise ProtocolError("hello field 'gen_len' must be >= 1")
    return out


def parse_request(record: dict, prompt_len: int, gen_len: int) -> tuple[int, list[int]]:
    """Validate a req against the session geometry; returns (id, tokens)."""
    if "id" not in record or not isinstance(record["id"], int):
        raise ProtocolError("req field 'id' must be an integer")
    req_id = record["id"]
    if record.get("prompt_len") != prompt_len:
        raise ProtocolError(
            f"req field 'prompt_len' is {record.get('prompt_len')!r}, "
            f"session declared {prompt_len}")
    tokens = record.get("tokens")
    n = prompt_len + gen_len
    if not isinstance(tokens, list) or len(tokens) != n:
        got = len(tokens) if isinstance(tokens, list) else type(tokens).__name__
        raise ProtocolError(f"req field 'tokens' must be a list of {n} integers, got {got}")
    for t in tokens:
        if not isinstance(t, int) or isinstance(t, bool):
            raise ProtocolError(f"req field 'tokens' contains a non-integer {t!r}")
    return req_id, tokens