"""Entry point: serve a model (or the stub) behind the oracle protocol."""

from __future__ import annotations

import argparse
import logging
import sys

from .server import OracleServer


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="dawn-serve",
        description="serve a masked-LM oracle over the line protocol")
    ap.add_argument("--model", default=None, metavar="ID",
                    help="HF model id or local path")
    ap.add_argument("--listen", default="127.0.0.1:7060", metavar="HOST:PORT")
    ap.add_argument("--attn-layers", type=int, default=4,
                    help="average attention over the last K layers")
    ap.add_argument("--stub", action="store_true",
                    help="serve deterministic synthetic outputs, no model")
    ap.add_argument("--vocab-size", type=int, default=1000,
                    help="stub vocabulary size")
    ap.add_argument("--mask-id", type=int, default=None,
                    help="override the tokenizer's mask token id")
    ap.add_argument("--log-level", default="info",
                    choices=["debug", "info", "warning", "error"])
    return ap


def build_server(args: argparse.Namespace) -> OracleServer:
    host, _, port_str = args.listen.rpartition(":")
    try:
        port = int(port_str)
    except ValueError:
        raise SystemExit(f"--listen must be HOST:PORT, got {args.listen!r}")
    if args.stub:
        from .backends import StubBackend
        backend = StubBackend(vocab_size=args.vocab_size,
                              attn_layers=args.attn_layers)
    elif args.model:
        from .backends import HFBackend
        backend = HFBackend(args.model, attn_layers=args.attn_layers,
                            mask_id=args.mask_id)
    else:
        raise SystemExit("pass --model ID or --stub")
    return OracleServer((host or "127.0.0.1", port), backend)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level.upper(),
                        format="%(asctime)s %(levelname)s %(message)s")
    server = build_server(args)
    host, port = server.server_address[:2]
    mode = "stub" if args.stub else args.model
    logging.info("serving %s on %s:%d", mode, host, port)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        logging.info("shutting down")
    finally:
        server.server_close()
    return 0


if __name__ == "__main__":
    sys.exit(main())