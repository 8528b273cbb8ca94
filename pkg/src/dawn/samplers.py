"""Decode loops: dependency-aware, top-1, and confidence-threshold.

All three loops share the same skeleton: query the oracle once per step
(the step count is exactly the NFE), choose a commit set restricted to
masked slots in the active block, write the oracle's top-1 tokens at the
chosen positions, then advance the block when it is fully committed.
Every step commits at least one position, so a decode of length L takes
at most L steps.

An observer object (see ``trace``) may watch steps for persistence; the
loops themselves never do I/O.
"""

from __future__ import annotations

import time
from collections import Counter
from dataclasses import dataclass, field

from .core import DecodeState, Oracle, SamplerConfig
from .depgraph import build_graph
from .scheduler import UpdateSet, select_update_set


@dataclass
class RunMetrics:
    """Outcome of one decode.

    ``per_step_commits`` is a histogram mapping commit-set size to the
    number of steps with that size.  ``invalid_pairs`` is filled only
    when the oracle can count coupled-pair violations; ``exact_match_top1``
    and ``speedup_vs_top1`` only when a top-1 reference run exists (see
    ``run_comparison``).
    """

    sampler: str
    seed: int
    nfe: int
    tokens_committed: int
    per_step_commits: dict[int, int]
    wall_ms: float
    invalid_pairs: int | None = None
    exact_match_top1: bool | None = None
    speedup_vs_top1: float | None = None


def _in_block_argmax(state: DecodeState, pred, block_length: int) -> int:
    masked = state.masked_in_block(block_length)
    return max(masked, key=lambda i: (float(pred.confidence[i]), -i))


def _decode(oracle: Oracle, cfg: SamplerConfig, seed: int, sampler: str,
            observer=None) -> tuple[list[int], RunMetrics]:
    state = DecodeState.initial(oracle.prompt, cfg.gen_length)
    hist: Counter[int] = Counter()
    start = time.perf_counter()
    while state.has_masked():
        pred = oracle.query(state, seed)
        if sampler == "dawn":
            graph = build_graph(pred, cfg)
            update = select_update_set(state, pred, graph, cfg)
        elif sampler == "top1":
            update = UpdateSet(anchor_part=[],
                               conflict_part=[_in_block_argmax(state, pred, cfg.block_length)],
                               fallback=True)
        elif sampler == "confidence":
            above = [
                i for i in state.masked_in_block(cfg.block_length)
                if float(pred.confidence[i]) >= cfg.tau_high
            ]
            if above:
                update = UpdateSet(anchor_part=above, conflict_part=[])
            else:
                update = UpdateSet(anchor_part=[],
                                   conflict_part=[_in_block_argmax(state, pred, cfg.block_length)],
                                   fallback=True)
        else:
            raise ValueError(f"unknown sampler {sampler!r}")

        chosen = update.chosen()
        if not chosen:
            raise RuntimeError("scheduler returned an empty commit set")
        p = state.prompt_len
        for i in chosen:
            state.commit(i - p, int(pred.top1[i]), float(pred.confidence[i]))
        hist[len(chosen)] += 1
        if observer is not None:
            observer.on_step(state, pred, update, cfg)
        state.step += 1
        state.advance_block(cfg.block_length)

    wall_ms = (time.perf_counter() - start) * 1000.0
    response = [int(t) for t in state.response]
    invalid = None
    counter = getattr(oracle, "count_invalid_pairs", None)
    if counter is not None:
        invalid = counter(list(response))
    metrics = RunMetrics(
        sampler=sampler,
        seed=seed,
        nfe=state.step,
        tokens_committed=len(response),
        per_step_commits=dict(hist),
        wall_ms=wall_ms,
        invalid_pairs=invalid,
    )
    if observer is not None:
        observer.on_finish(response, metrics)
    return response, metrics


def decode_dawn(oracle: Oracle, cfg: SamplerConfig, seed: int,
                observer=None) -> tuple[list[int], RunMetrics]:
    """Graph-aware parallel decode: anchor route plus conflict route."""
    return _decode(oracle, cfg, seed, "dawn", observer)


def decode_top1(oracle: Oracle, cfg: SamplerConfig, seed: int,
                observer=None) -> tuple[list[int], RunMetrics]:
    """One argmax-confidence commit per step; NFE equals gen_length."""
    return _decode(oracle, cfg, seed, "top1", observer)


def decode_confidence(oracle: Oracle, cfg: SamplerConfig, seed: int,
                      observer=None) -> tuple[list[int], RunMetrics]:
    """Commit everything at or above tau_high, argmax fallback when empty."""
    return _decode(oracle, cfg, seed, "confidence", observer)


DECODERS = {
    "dawn": decode_dawn,
    "top1": decode_top1,
    "confidence": decode_confidence,
}


@dataclass
class RunRow:
    """One comparison cell: a decode attempt under one (config, seed)."""

    sampler: str
    seed: int
    cfg: SamplerConfig
    metrics: RunMetrics | None
    error: str | None = None
    response: list[int] | None = field(default=None, repr=False)


def run_comparison(oracle: Oracle, cfg_grid: list[SamplerConfig], seeds: list[int],
                   samplers: tuple[str, ...] = ("dawn", "top1", "confidence")) -> list[RunRow]:
    """Cartesian product of samplers x grid x seeds.

    The top-1 run of each (config, seed) cell is the reference for
    ``speedup_vs_top1`` and ``exact_match_top1``.  Failures are recorded
    on their row and the sweep continues; rows come back ordered by
    (sampler, grid index, seed).
    """
    if not cfg_grid or not seeds:
        raise ValueError("empty grid or seed list")
    cells: dict[tuple[str, int, int], RunRow] = {}
    for ci, cfg in enumerate(cfg_grid):
        for seed in seeds:
            reference: RunRow | None = None
            order = ("top1",) + tuple(s for s in samplers if s != "top1")
            for sampler in order:
                if sampler not in samplers:
                    continue
                try:
                    response, metrics = DECODERS[sampler](oracle, cfg, seed)
                    row = RunRow(sampler, seed, cfg, metrics, response=response)
                except Exception as exc:  # recorded per-row, sweep continues
                    row = RunRow(sampler, seed, cfg, None, error=f"{type(exc).__name__}: {exc}")
                if sampler == "top1":
                    reference = row
                    if row.metrics is not None:
                        row.metrics.speedup_vs_top1 = 1.0
                        row.metrics.exact_match_top1 = True
                elif reference is not None and reference.metrics is not None and row.metrics is not None:
                    row.metrics.speedup_vs_top1 = reference.metrics.nfe / row.metrics.nfe
                    row.metrics.exact_match_top1 = row.response == reference.response
                cells[(sampler, ci, seed)] = row
    return [
        cells[(sampler, ci, seed)]
        for sampler in samplers
        for ci in range(len(cfg_grid))
        for seed in seeds
        if (sampler, ci, seed) in cells
    ]


CSV_COLUMNS = [
    "sampler", "seed", "tau_high", "tau_low", "tau_induced", "tau_edge",
    "tau_sink", "gen_len", "block_len", "nfe", "tokens", "speedup_vs_top1",
    "invalid_pairs", "exact_match_top1", "wall_ms", "error",
]


def csv_record(row: RunRow) -> dict[str, str]:
    """Flatten a run row into the stable CSV schema.

    The trailing ``error`` column is empty on success; optional metrics
    render as empty strings rather than placeholders.
    """
    cfg, m = row.cfg, row.metrics
    rec = {
        "sampler": row.sampler,
        "seed": str(row.seed),
        "tau_high": repr(cfg.tau_high),
        "tau_low": repr(cfg.tau_low),
        "tau_induced": repr(cfg.tau_induced),
        "tau_edge": repr(cfg.tau_edge),
        "tau_sink": repr(cfg.tau_sink),
        "gen_len": str(cfg.gen_length),
        "block_len": str(cfg.block_length),
        "nfe": "" if m is None else str(m.nfe),
        "tokens": "" if m is None else str(m.tokens_committed),
        "speedup_vs_top1": "" if m is None or m.speedup_vs_top1 is None else repr(m.speedup_vs_top1),
        "invalid_pairs": "" if m is None or m.invalid_pairs is None else str(m.invalid_pairs),
        "exact_match_top1": "" if m is None or m.exact_match_top1 is None else str(int(m.exact_match_top1)),
        "wall_ms": "" if m is None else repr(m.wall_ms),
        "error": row.error or "",
    }
    return rec


def parse_csv_record(rec: dict[str, str]) -> RunRow:
    """Inverse of ``csv_record`` for the fields the schema carries.

    ``per_step_commits`` is not part of the schema and comes back empty.
    """
    cfg = SamplerConfig(
        tau_high=float(rec["tau_high"]),
        tau_low=float(rec["tau_low"]),
        tau_induced=float(rec["tau_induced"]),
        tau_edge=float(rec["tau_edge"]),
        tau_sink=float(rec["tau_sink"]),
        gen_length=int(rec["gen_len"]),
        block_length=int(rec["block_len"]),
    )
    metrics = None
    if rec["nfe"]:
        metrics = RunMetrics(
            sampler=rec["sampler"],
            seed=int(rec["seed"]),
            nfe=int(rec["nfe"]),
            tokens_committed=int(rec["tokens"]),
            per_step_commits={},
            wall_ms=float(rec["wall_ms"]),
            invalid_pairs=int(rec["invalid_pairs"]) if rec["invalid_pairs"] else None,
            exact_match_top1=bool(int(rec["exact_match_top1"])) if rec["exact_match_top1"] else None,
            speedup_vs_top1=float(rec["speedup_vs_top1"]) if rec["speedup_vs_top1"] else None,
        )
    return RunRow(
        sampler=rec["sampler"],
        seed=int(rec["seed"]),
        cfg=cfg,
        metrics=metrics,
        error=rec.get("error") or None,
    )
