"""Run-trace persistence: JSON-lines records for post-hoc inspection.

A trace is a header record, one record per decode step, and a summary
record.  Traces exist for inspection and metric recomputation only.
They are NOT replayable as oracles: every oracle query's input depends
on all commits before it, so a schedule that deviates from the recorded
one would need predictions for states the trace never saw.

Record shapes (one JSON object per line):

* header: sampler, seed, config (all sampler fields), oracle label,
  prompt token list, and the toy grammar definition when one applies.
* step: step index, committed [position, token, confidence] triples,
  anchor_part / conflict_part split, fallback flag, and a sink section
  holding per-position mean incoming attention plus flagged columns.
* summary: final response, nfe, tokens, per-step commit histogram,
  invalid_pairs (when counted), wall_ms.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

from .core import DecodeState, SamplerConfig, StepPrediction
from .depgraph import sink_report
from .samplers import RunMetrics
from .scheduler import UpdateSet
from .toy import ToyGrammar, toy_validate


class TraceWriter:
    """Observer for the decode loops; writes one record per step."""

    def __init__(self, path: str, sampler: str, seed: int, cfg: SamplerConfig,
                 oracle_label: str, prompt: tuple[int, ...],
                 grammar: ToyGrammar | None = None):
        self._fh = open(path, "w", encoding="utf-8")
        self._write({
            "type": "header",
            "sampler": sampler,
            "seed": seed,
            "config": asdict(cfg),
            "oracle": oracle_label,
            "prompt": list(prompt),
            "grammar": _grammar_dict(grammar),
        })

    def _write(self, record: dict) -> None:
        self._fh.write(json.dumps(record) + "\n")

    def on_step(self, state: DecodeState, pred: StepPrediction,
                update: UpdateSet, cfg: SamplerConfig) -> None:
        p = state.prompt_len
        committed = [
            [i, state.response[i - p], state.commit_confidence[i - p]]
            for i in update.chosen()
        ]
        report = sink_report(pred.attention, cfg.tau_sink)
        self._write({
            "type": "step",
            "step": state.step,
            "committed": committed,
            "anchor_part": list(update.anchor_part),
            "conflict_part": list(update.conflict_part),
            "fallback": update.fallback,
            "sink": {
                "means": [float(v) for v in report.means],
                "sinks": report.sinks,
            },
        })

    def on_finish(self, response: list[int], metrics: RunMetrics) -> None:
        self._write({
            "type": "summary",
            "response": response,
            "nfe": metrics.nfe,
            "tokens": metrics.tokens_committed,
            "per_step_commits": {str(k): v for k, v in sorted(metrics.per_step_commits.items())},
            "invalid_pairs": metrics.invalid_pairs,
            "wall_ms": metrics.wall_ms,
        })
        self._fh.close()

    def close(self) -> None:
        if not self._fh.closed:
            self._fh.close()


def _grammar_dict(grammar: ToyGrammar | None) -> dict | None:
    if grammar is None:
        return None
    d = asdict(grammar)
    d["pairs"] = [list(p) for p in grammar.pairs]
    return d


def _grammar_from_dict(d: dict) -> ToyGrammar:
    d = dict(d)
    d["pairs"] = tuple(tuple(p) for p in d["pairs"])
    return ToyGrammar(**d)


@dataclass
class Trace:
    header: dict
    steps: list[dict]
    summary: dict | None

    def grammar(self) -> ToyGrammar | None:
        g = self.header.get("grammar")
        return None if g is None else _grammar_from_dict(g)


def read_trace(path: str) -> Trace:
    header = None
    steps: list[dict] = []
    summary = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: not a JSON record: {exc}") from None
            kind = record.get("type")
            if kind == "header":
                header = record
            elif kind == "step":
                steps.append(record)
            elif kind == "summary":
                summary = record
            else:
                raise ValueError(f"{path}:{lineno}: unknown record type {kind!r}")
    if header is None:
        raise ValueError(f"{path}: missing header record")
    return Trace(header=header, steps=steps, summary=summary)


def recompute_metrics(trace: Trace) -> RunMetrics:
    """Rebuild RunMetrics from step records alone.

    nfe, token count, the per-step histogram, and (when the header
    carries a grammar) invalid_pairs are recomputed from the step
    records; wall_ms is copied from the summary since elapsed time is
    not recomputable.
    """
    cfg = trace.header["config"]
    gen_length = cfg["gen_length"]
    prompt_len = len(trace.header["prompt"])
    response: list[int | None] = [None] * gen_length
    hist: dict[int, int] = {}
    for record in trace.steps:
        committed = record["committed"]
        hist[len(committed)] = hist.get(len(committed), 0) + 1
        for pos, token, _conf in committed:
            response[pos - prompt_len] = token
    invalid = None
    grammar = trace.grammar()
    if grammar is not None and all(t is not None for t in response):
        invalid = toy_validate(response, grammar)
    wall_ms = trace.summary["wall_ms"] if trace.summary else 0.0
    return RunMetrics(
        sampler=trace.header["sampler"],
        seed=trace.header["seed"],
        nfe=len(trace.steps),
        tokens_committed=sum(len(r["committed"]) for r in trace.steps),
        per_step_commits=hist,
        wall_ms=wall_ms,
        invalid_pairs=invalid,
    )


def sink_rows_from_trace(trace: Trace) -> list[tuple[int, int, float, int]]:
    """Flatten per-step sink sections into (step, position, mean, is_sink) rows."""
    rows: list[tuple[int, int, float, int]] = []
    for idx, record in enumerate(trace.steps):
        section = record.get("sink")
        if section is None:
            raise ValueError(f"trace step record {idx} is missing field 'sink'")
        flagged = set(section["sinks"])
        for pos, mean in enumerate(section["means"]):
            rows.append((record["step"], pos, float(mean), int(pos in flagged)))
    return rows
