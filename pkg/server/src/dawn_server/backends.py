"""Prediction backends: a deterministic stub and a served HF model.

A backend answers one request: given the token window (masked slots as
the -1 sentinel) it returns per-position top-1 ids, confidences, and a
row-stochastic attention matrix over the full window.  Confidence is
exactly 1.0 at non-masked positions, with the input token echoed as
top-1 there.
"""

from __future__ import annotations

import hashlib
import struct

import numpy as np

from .protocol import MASK_SENTINEL


class BackendError(Exception):
    """Model-side failure; the connection is closed after reporting it."""


class StubBackend:
    """Synthetic outputs, a pure function of the token window.

    Identical requests get identical responses (the determinism the
    client relies on), with no model weights involved.  Masked slots
    draw confidence from [0.05, 1) and a uniform token; attention rows
    are normalized gamma noise.
    """

    def __init__(self, vocab_size: int = 1000, attn_layers: int = 4):
        self.vocab_size = vocab_size
        self.attn_layers = attn_layers

    def _rng(self, tokens: list[int], prompt_len: int) -> np.random.Generator:
        digest = hashlib.blake2b(
            struct.pack(f">i{len(tokens)}q", prompt_len, *tokens),
            digest_size=8,
        ).digest()
        return np.random.default_rng(int.from_bytes(digest, "big"))

    def predict(self, tokens: list[int], prompt_len: int):
        rng = self._rng(tokens, prompt_len)
        n = len(tokens)
        top1 = np.empty(n, dtype=np.int64)
        conf = np.empty(n, dtype=np.float64)
        for i, t in enumerate(tokens):
            if t == MASK_SENTINEL:
                top1[i] = rng.integers(0, self.vocab_size)
                conf[i] = rng.uniform(0.05, 1.0)
            else:
                top1[i] = t
                conf[i] = 1.0
        attn = rng.gamma(shape=0.5, scale=1.0, size=(n, n)) + 1e-9
        attn /= attn.sum(axis=1, keepdims=True)
        return top1, conf, attn


class HFBackend:
    """Wraps a pretrained bidirectional masked-LM behind the protocol.

    One forward pass per request; confidences are max softmax
    probabilities, attention is the arithmetic mean over every head of
    the last ``attn_layers`` layers of post-softmax attention, computed
    on the full window.  Heavy imports happen here so the stub path
    never needs torch installed.
    """

    def __init__(self, model_id: str, attn_layers: int = 4,
                 mask_id: int | None = None, device: str | None = None):
        try:
            import torch
            from transformers import AutoModel, AutoTokenizer
        except ImportError as exc:
            raise BackendError(f"model backend needs torch+transformers: {exc}") from None

        self._torch = torch
        self.attn_layers = attn_layers
        self.device = device or ("cuda" if torch.cuda.is_available() else "cpu")
        self.tokenizer = AutoTokenizer.from_pretrained(model_id, trust_remote_code=True)
        self.model = AutoModel.from_pretrained(
            model_id, trust_remote_code=True,
            torch_dtype=torch.bfloat16 if self.device == "cuda" else torch.float32,
        ).to(self.device).eval()
        self.mask_id = mask_id if mask_id is not None else self.tokenizer.mask_token_id
        if self.mask_id is None:
            raise BackendError(
                "tokenizer has no mask token; pass an explicit mask id")
        self.vocab_size = int(self.model.config.vocab_size)

    def predict(self, tokens: list[int], prompt_len: int):
        torch = self._torch
        ids = [self.mask_id if t == MASK_SENTINEL else t for t in tokens]
        masked = [i for i, t in enumerate(tokens) if t == MASK_SENTINEL]
        try:
            with torch.no_grad():
                out = self.model(
                    torch.tensor([ids], device=self.device),
                    output_attentions=True,
                )
                logits = out.logits[0].float()
                probs = torch.softmax(logits, dim=-1)
                conf_t, top1_t = probs.max(dim=-1)
                layers = out.attentions[-self.attn_layers:]
                attn_t = torch.stack([a[0].float() for a in layers]).mean(dim=(0, 1))
        except Exception as exc:
            raise BackendError(f"forward pass failed: {exc}") from None

        n = len(tokens)
        top1 = top1_t.cpu().numpy().astype(np.int64)
        conf = conf_t.cpu().numpy().astype(np.float64)
        attn = attn_t.cpu().numpy().astype(np.float64)
        if attn.shape != (n, n):
            raise BackendError(f"model returned attention {attn.shape}, expected {(n, n)}")
        # bf16 rounding can leave rows a hair off stochastic; renormalize
        attn = np.clip(attn, 0.0, None)
        attn /= attn.sum(axis=1, keepdims=True)
        masked_set = set(masked)
        for i, t in enumerate(tokens):
            if i not in masked_set:
                top1[i] = t
                conf[i] = 1.0
        np.clip(conf, 0.0, 1.0, out=conf)
        return top1, conf, attn