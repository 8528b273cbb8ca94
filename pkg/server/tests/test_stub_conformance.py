"""Stub-mode protocol conformance, driven by the engine's own client.

The client validates every response (id echo, shapes, [0,1] ranges, row
sums within 1e-5, pinned confidences), so a clean pass here is the
protocol conformance check.
"""

import json
import socket
from contextlib import contextmanager

import numpy as np
import pytest

from dawn.core import DecodeState
from dawn.remote import RemoteOracle
from dawn.samplers import decode_dawn

from dawn_server.backends import BackendError, StubBackend
from dawn_server.cli import build_parser, build_server
from dawn_server.server import OracleServer


@contextmanager
def criterion(num: int, label: str):
    try:
        yield
    except BaseException:
        print(f"[FAIL] criterion {num}: {label}")
        raise
    print(f"[PASS] criterion {num}: {label}")


@pytest.fixture
def stub_server():
    server = OracleServer(("127.0.0.1", 0), StubBackend(vocab_size=500))
    server.serve_in_thread()
    yield server
    server.shutdown()
    server.server_close()


def _random_state(rng: np.random.Generator):
    prompt_len = int(rng.integers(1, 6))
    gen_len = int(rng.integers(2, 24))
    prompt = tuple(int(t) for t in rng.integers(0, 500, size=prompt_len))
    state = DecodeState.initial(prompt, gen_len)
    for r in range(gen_len):
        if rng.random() < 0.4 and sum(s is None for s in state.response) > 1:
            state.commit(r, int(rng.integers(0, 500)), 1.0)
    return state


def test_criterion_9_stub_protocol_conformance(stub_server):
    with criterion(9, "stub server satisfies every client validator over 100 "
                      "randomized requests and reports malformed requests "
                      "without corrupting the connection"):
        rng = np.random.default_rng(909)
        port = stub_server.server_address[1]

        queries = 0
        while queries < 100:
            state = _random_state(rng)
            with RemoteOracle("127.0.0.1", port, prompt=state.prompt,
                              gen_length=state.gen_length, attn_layers=4) as oracle:
                assert oracle.vocab_size == 500
                first = oracle.query(state, seed=0)
                again = oracle.query(state, seed=0)
                queries += 2
                # identical requests are answered identically
                assert np.array_equal(first.top1, again.top1)
                assert np.array_equal(first.confidence, again.confidence)
                assert np.array_equal(first.attention, again.attention)
                # and masked slots stay below the pinned 1.0
                p = state.prompt_len
                for i in range(state.n):
                    fixed = i < p or state.response[i - p] is not None
                    assert (first.confidence[i] == 1.0) == fixed

        _exercise_malformed_requests(port)


def _lines(sock_file, record):
    sock_file.write((json.dumps(record) + "\n").encode())
    sock_file.flush()
    return json.loads(sock_file.readline())


def _exercise_malformed_requests(port: int) -> None:
    with socket.create_connection(("127.0.0.1", port), timeout=5) as sock:
        fh = sock.makefile("rwb")

        # req before hello
        reply = _lines(fh, {"type": "req", "id": 0, "prompt_len": 1, "tokens": [1, -1]})
        assert reply["type"] == "error" and reply["code"] == "protocol"
        assert "hello" in reply["message"]

        # garbage line; connection must survive
        fh.write(b"this is not json\n")
        fh.flush()
        reply = json.loads(fh.readline())
        assert reply["type"] == "error" and reply["code"] == "protocol"

        reply = _lines(fh, {"type": "hello", "session": "t", "prompt_len": 2,
                            "gen_len": 3, "attn_layers": 4})
        assert reply["type"] == "hello_ack" and reply["vocab_size"] == 500

        # wrong tokens length, named in the message
        reply = _lines(fh, {"type": "req", "id": 0, "prompt_len": 2,
                            "tokens": [1, 2, -1]})
        assert reply["type"] == "error" and reply["code"] == "protocol"
        assert "'tokens'" in reply["message"]

        # inconsistent prompt_len, named in the message
        reply = _lines(fh, {"type": "req", "id": 1, "prompt_len": 3,
                            "tokens": [1, 2, -1, -1, -1]})
        assert reply["type"] == "error" and reply["code"] == "protocol"
        assert "'prompt_len'" in reply["message"]

        # unknown record type
        reply = _lines(fh, {"type": "mystery"})
        assert reply["type"] == "error" and reply["code"] == "protocol"

        # the session is still usable after all of the above
        reply = _lines(fh, {"type": "req", "id": 2, "prompt_len": 2,
                            "tokens": [1, 2, -1, -1, -1]})
        assert reply["type"] == "resp" and reply["id"] == 2
        assert len(reply["top1"]) == 5


class _ExplodingBackend(StubBackend):
    def predict(self, tokens, prompt_len):
        raise BackendError("synthetic meltdown")


def test_model_failure_closes_connection():
    server = OracleServer(("127.0.0.1", 0), _ExplodingBackend())
    server.serve_in_thread()
    try:
        with socket.create_connection(server.server_address, timeout=5) as sock:
            fh = sock.makefile("rwb")
            reply = _lines(fh, {"type": "hello", "session": "t", "prompt_len": 1,
                                "gen_len": 2, "attn_layers": 4})
            assert reply["type"] == "hello_ack"
            reply = _lines(fh, {"type": "req", "id": 0, "prompt_len": 1,
                                "tokens": [5, -1, -1]})
            assert reply["type"] == "error" and reply["code"] == "model"
            assert fh.readline() == b""  # server hung up
    finally:
        server.shutdown()
        server.server_close()


def test_full_decode_against_stub(stub_server):
    from dawn.core import SamplerConfig

    port = stub_server.server_address[1]
    cfg = SamplerConfig(gen_length=12, block_length=4)
    with RemoteOracle("127.0.0.1", port, prompt=(7, 8, 9),
                      gen_length=12, attn_layers=4) as oracle:
        response, metrics = decode_dawn(oracle, cfg, seed=0)
    assert len(response) == 12
    assert None not in response
    assert metrics.nfe <= 12


def test_cli_builds_stub_server():
    args = build_parser().parse_args(
        ["--stub", "--listen", "127.0.0.1:0", "--vocab-size", "321"])
    server = build_server(args)
    try:
        server.serve_in_thread()
        port = server.server_address[1]
        with RemoteOracle("127.0.0.1", port, prompt=(1,), gen_length=4,
                          attn_layers=4) as oracle:
            assert oracle.vocab_size == 321
    finally:
        server.shutdown()
        server.server_close()


def test_cli_requires_a_backend_choice():
    args = build_parser().parse_args(["--listen", "127.0.0.1:0"])
    with pytest.raises(SystemExit):
        build_server(args)