"""Shared domain types for the decoding engine.

Position indexing convention used everywhere: the model window holds the
prompt (positions ``0 .. P-1``) followed by the response (positions
``P .. P+L-1``).  Attention matrices, dependency graphs, anchors and
update sets all use these *global* indices; ``DecodeState.response`` is
indexed response-relative (``0 .. L-1``).

A masked slot is represented as ``None`` in ``DecodeState.response``,
never as a vocabulary token id.  On the wire it is encoded as the
reserved sentinel ``-1`` (see ``remote``).
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from typing import Protocol, runtime_checkable

import numpy as np

MASK_SENTINEL = -1

ROW_SUM_TOL = 1e-5


class OracleError(Exception):
    """Base class for oracle and protocol failures."""

    code = "oracle"


class OracleUnavailable(OracleError):
    """Transport-level failure talking to a remote oracle."""

    code = "unavailable"


class DimensionMismatch(OracleError):
    """Oracle returned arrays whose shapes do not match the session."""

    code = "shape_mismatch"


class RowSumViolation(OracleError):
    """An attention row does not sum to 1 within tolerance."""

    code = "row_sum"


class ProtocolViolation(OracleError):
    """Malformed or out-of-order wire record."""

    code = "protocol"


@dataclass
class DecodeState:
    """Prompt plus partially unmasked response at one denoising step.

    ``response[r] is None`` means slot ``r`` is still masked;
    ``commit_confidence[r]`` is the confidence recorded when the slot was
    committed (``None`` while masked).  ``block_start`` is the
    response-relative index of the active block and is always a multiple
    of the block length.
    """

    prompt: tuple[int, ...]
    response: list[int | None]
    commit_confidence: list[float | None]
    step: int = 0
    block_start: int = 0

    @classmethod
    def initial(cls, prompt: tuple[int, ...] | list[int], gen_length: int) -> "DecodeState":
        return cls(
            prompt=tuple(prompt),
            response=[None] * gen_length,
            commit_confidence=[None] * gen_length,
        )

    @property
    def prompt_len(self) -> int:
        return len(self.prompt)

    @property
    def gen_length(self) -> int:
        return len(self.response)

    @property
    def n(self) -> int:
        return len(self.prompt) + len(self.response)

    def num_committed(self) -> int:
        return sum(1 for s in self.response if s is not None)

    def masked_response_indices(self) -> list[int]:
        return [r for r, s in enumerate(self.response) if s is None]

    def has_masked(self) -> bool:
        return any(s is None for s in self.response)

    def block_end(self, block_length: int) -> int:
        return min(self.block_start + block_length, self.gen_length)

    def masked_in_block(self, block_length: int) -> list[int]:
        """Global indices of masked slots inside the active block."""
        p = self.prompt_len
        return [
            p + r
            for r in range(self.block_start, self.block_end(block_length))
            if self.response[r] is None
        ]

    def commit(self, r: int, token: int, confidence: float) -> None:
        if self.response[r] is not None:
            raise ValueError(f"slot {r} already committed")
        self.response[r] = int(token)
        self.commit_confidence[r] = float(confidence)

    def advance_block(self, block_length: int) -> None:
        """Move ``block_start`` past every fully committed block."""
        while self.block_start < self.gen_length:
            end = self.block_end(block_length)
            if any(self.response[r] is None for r in range(self.block_start, end)):
                break
            self.block_start += block_length


@dataclass
class StepPrediction:
    """Per-step model output over the full prompt+response window.

    ``top1[i]`` is the argmax token at position ``i`` (meaningful only
    for masked response positions), ``confidence[i]`` the max predictive
    probability there (pinned to 1.0 for prompt and committed positions),
    and ``attention`` the row-stochastic matrix already aggregated over
    heads and the last few layers.
    """

    top1: np.ndarray
    confidence: np.ndarray
    attention: np.ndarray


def validate_prediction(pred: StepPrediction, state: DecodeState | None = None,
                        tol: float = ROW_SUM_TOL) -> None:
    """Shape/range checks shared by every oracle implementation.

    Raises ``DimensionMismatch`` or ``RowSumViolation``; passing the
    originating state additionally pins prompt/committed confidences to
    exactly 1.0.
    """
    attn = pred.attention
    if attn.ndim != 2 or attn.shape[0] != attn.shape[1]:
        raise DimensionMismatch(f"attention must be square, got {attn.shape}")
    n = attn.shape[0]
    if pred.top1.shape != (n,) or pred.confidence.shape != (n,):
        raise DimensionMismatch(
            f"top1/confidence must have length {n}, got {pred.top1.shape} / {pred.confidence.shape}"
        )
    if state is not None and state.n != n:
        raise DimensionMismatch(f"prediction is {n}-wide but state window is {state.n}")
    row_sums = attn.sum(axis=1)
    bad = np.flatnonzero(np.abs(row_sums - 1.0) > tol)
    if bad.size:
        raise RowSumViolation(f"attention row {bad[0]} sums to {row_sums[bad[0]]:.6f}")
    if attn.min() < 0.0 or attn.max() > 1.0 + tol:
        raise RowSumViolation("attention entries outside [0, 1]")
    if pred.confidence.min() < 0.0 or pred.confidence.max() > 1.0:
        raise RowSumViolation("confidence entries outside [0, 1]")
    if state is not None:
        p = state.prompt_len
        for i in range(state.n):
            fixed = i < p or state.response[i - p] is not None
            if fixed and pred.confidence[i] != 1.0:
                raise RowSumViolation(f"fixed position {i} reports confidence != 1.0")


@runtime_checkable
class Oracle(Protocol):
    """One forward evaluation of the model being decoded.

    ``query`` must be deterministic given ``(state, seed)`` and raise
    ``ValueError`` when the state has no masked slot.  Implementations
    must be safe to call from one thread at a time per decode session.
    """

    vocab_size: int

    def query(self, state: DecodeState, seed: int) -> StepPrediction: ...


@dataclass(frozen=True)
class SamplerConfig:
    """All decoding thresholds and lengths.

    ``induced_hops`` widens anchor reachability beyond direct successors
    (1 = direct edges only); ``sink_filter`` disables sink removal when
    False, which is useful for ablations.
    """

    tau_high: float = 0.9
    tau_low: float = 0.8
    tau_induced: float = 0.7
    tau_edge: float = 0.07
    tau_sink: float = 0.01
    gen_length: int = 256
    block_length: int = 32
    attn_layers: int = 4
    induced_hops: int = 1
    sink_filter: bool = True


def validate_config(cfg: SamplerConfig) -> list[str]:
    """Return every violated invariant (empty list means the config is ok)."""
    v: list[str] = []
    if not 0.0 <= cfg.tau_high <= 1.0:
        v.append("tau_high in [0, 1]")
    if not 0.0 <= cfg.tau_low <= 1.0:
        v.append("tau_low in [0, 1]")
    if cfg.tau_low > cfg.tau_high:
        v.append("tau_low <= tau_high")
    if not 0.0 <= cfg.tau_induced <= 1.0:
        v.append("tau_induced in [0, 1]")
    if cfg.tau_induced > cfg.tau_high:
        v.append("tau_induced <= tau_high")
    if not 0.0 <= cfg.tau_edge <= 1.0:
        v.append("tau_edge in [0, 1]")
    if not 0.0 <= cfg.tau_sink <= 1.0:
        v.append("tau_sink in [0, 1]")
    if cfg.gen_length < 1:
        v.append("gen_length >= 1")
    if not 1 <= cfg.block_length <= max(cfg.gen_length, 1):
        v.append("1 <= block_length <= gen_length")
    if cfg.attn_layers < 1:
        v.append("attn_layers >= 1")
    if cfg.induced_hops < 1:
        v.append("induced_hops >= 1")
    return v


_INT_FIELDS = {"gen_length", "block_length", "attn_layers", "induced_hops"}
_BOOL_FIELDS = {"sink_filter"}


def _parse_value(name: str, raw: str):
    if name in _BOOL_FIELDS:
        low = raw.lower()
        if low in ("true", "1", "yes", "on"):
            return True
        if low in ("false", "0", "no", "off"):
            return False
        raise ValueError(f"{name}: expected a boolean, got {raw!r}")
    if name in _INT_FIELDS:
        return int(raw)
    return float(raw)


def load_config_file(path: str) -> dict:
    """Parse a flat ``key = value`` config file into override values.

    Lines are ``name = number`` (or ``name number``); ``#`` starts a
    comment.  Unknown keys raise ``ValueError``.
    """
    known = {f.name for f in fields(SamplerConfig)}
    overrides: dict = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" in line:
                key, _, raw = line.partition("=")
            else:
                parts = line.split(None, 1)
                if len(parts) != 2:
                    raise ValueError(f"{path}:{lineno}: expected 'name = value'")
                key, raw = parts
            key, raw = key.strip(), raw.strip()
            if key not in known:
                raise ValueError(f"{path}:{lineno}: unknown config key {key!r}")
            overrides[key] = _parse_value(key, raw)
    return overrides


def apply_overrides(cfg: SamplerConfig, overrides: dict) -> SamplerConfig:
    return replace(cfg, **overrides)


# Per-model hyperparameter presets; tau_low is benchmark-specific while
# the remaining thresholds are shared across benchmarks for each model.
PRESETS: dict[str, dict] = {
    "llada-8b-instruct": {
        "tau_induced": 0.70, "tau_sink": 0.01, "tau_edge": 0.07,
        "tau_low": {"gsm8k": 0.75, "math": 0.75, "humaneval": 0.8, "mbpp": 0.7},
    },
    "llada-1.5": {
        "tau_induced": 0.70, "tau_sink": 0.01, "tau_edge": 0.07,
        "tau_low": {"gsm8k": 0.75, "math": 0.75, "humaneval": 0.8, "mbpp": 0.75},
    },
    "dream-v0-base-7b": {
        "tau_induced": 0.75, "tau_sink": 0.03, "tau_edge": 0.05,
        "tau_low": {"gsm8k": 0.75, "math": 0.8, "humaneval": 0.8, "mbpp": 0.8},
    },
    "dream-v0-instruct-7b": {
        "tau_induced": 0.75, "tau_sink": 0.03, "tau_edge": 0.10,
        "tau_low": {"gsm8k": 0.8, "math": 0.8, "humaneval": 0.8, "mbpp": 0.8},
    },
}

DEFAULT_PRESET_TASK = "humaneval"


def preset_config(name: str, task: str = DEFAULT_PRESET_TASK,
                  base: SamplerConfig | None = None) -> SamplerConfig:
    """Config for a named model preset and benchmark task."""
    key = name.lower()
    if key not in PRESETS:
        raise KeyError(f"unknown preset {name!r}; options: {sorted(PRESETS)}")
    entry = PRESETS[key]
    tau_low_by_task = entry["tau_low"]
    if task.lower() not in tau_low_by_task:
        raise KeyError(f"unknown task {task!r}; options: {sorted(tau_low_by_task)}")
    cfg = base or SamplerConfig()
    return replace(
        cfg,
        tau_induced=entry["tau_induced"],
        tau_sink=entry["tau_sink"],
        tau_edge=entry["tau_edge"],
        tau_low=tau_low_by_task[task.lower()],
    )
