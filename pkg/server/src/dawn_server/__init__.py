"""Oracle protocol server: stub and HF-model backends."""

from .backends import BackendError, HFBackend, StubBackend
from .protocol import MASK_SENTINEL, ProtocolError, decode_line, encode_record
from .server import OracleServer

__version__ = "0.1.0"

__all__ = [
    "BackendError",
    "HFBackend",
    "MASK_SENTINEL",
    "OracleServer",
    "ProtocolError",
    "StubBackend",
    "decode_line",
    "encode_record",
]