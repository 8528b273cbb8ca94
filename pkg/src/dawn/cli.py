"""Benchmark command line: single decodes, sweeps, sink diagnostics.

Exit codes: 0 success, 1 runtime or oracle failure, 2 usage or config
error.  The environment variable DAWN_CONFIG names a default config
file; an explicit --config wins over it and individual flags win over
both.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from dataclasses import replace

from .core import (
    OracleError,
    OracleUnavailable,
    SamplerConfig,
    apply_overrides,
    load_config_file,
    preset_config,
    validate_config,
    PRESETS,
    DEFAULT_PRESET_TASK,
)
from .depgraph import sink_report
from .samplers import (
    CSV_COLUMNS,
    DECODERS,
    RunRow,
    csv_record,
    run_comparison,
)
from .toy import ToyGrammar, ToyOracle, load_grammar_file
from .trace import TraceWriter, read_trace, sink_rows_from_trace

ENV_CONFIG = "DAWN_CONFIG"

_OVERRIDE_FLAGS = {
    "tau_high": float,
    "tau_low": float,
    "tau_induced": float,
    "tau_edge": float,
    "tau_sink": float,
    "gen_length": int,
    "block_length": int,
    "attn_layers": int,
    "induced_hops": int,
}


class UsageError(Exception):
    pass


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dawn-bench",
        description="Dependency-aware parallel decoding benchmark harness.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--oracle", default="toy",
                       help="'toy' or 'remote:HOST:PORT' (default: toy)")
        p.add_argument("--grammar", default=None, metavar="FILE",
                       help="toy grammar definition file")
        p.add_argument("--config", default=None, metavar="FILE",
                       help=f"config file (default: ${ENV_CONFIG} when set)")
        p.add_argument("--preset", default=None, choices=sorted(PRESETS),
                       help="named threshold preset")
        p.add_argument("--task", default=DEFAULT_PRESET_TASK,
                       help="benchmark task selecting the preset tau_low")
        p.add_argument("--prompt", default=None, metavar="IDS",
                       help="comma-separated prompt token ids (remote oracle)")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--csv", default=None, metavar="PATH")
        for name, typ in _OVERRIDE_FLAGS.items():
            p.add_argument(f"--{name.replace('_', '-')}", type=typ, default=None)
        p.add_argument("--no-sink-filter", action="store_true",
                       help="keep edges incident to detected sinks")

    p_run = sub.add_parser("run", help="execute one decode")
    add_common(p_run)
    p_run.add_argument("--sampler", default="dawn", choices=sorted(DECODERS))
    p_run.add_argument("--trace", default=None, metavar="PATH",
                       help="write a JSON-lines run trace")

    p_grid = sub.add_parser("grid", help="comparison sweep over configs and seeds")
    add_common(p_grid)
    p_grid.add_argument("--sweep", action="append", default=[], metavar="NAME=SPEC",
                        help="axis as name=start:stop:step or name=v1,v2,... (repeatable)")
    p_grid.add_argument("--seeds", default="0",
                        help="seed list: 'a,b,c' or 'a..b' inclusive (default: 0)")
    p_grid.add_argument("--samplers", default="dawn,top1,confidence",
                        help="comma-separated subset of the samplers")

    p_sinks = sub.add_parser("sinks", help="per-step sink diagnostics")
    add_common(p_sinks)
    p_sinks.add_argument("--sampler", default="dawn", choices=sorted(DECODERS))
    p_sinks.add_argument("--trace", default=None, metavar="PATH",
                         help="read sink sections from an existing trace instead of decoding")
    return parser


def resolve_config(args: argparse.Namespace) -> SamplerConfig:
    cfg = SamplerConfig()
    path = args.config or os.environ.get(ENV_CONFIG)
    if path:
        try:
            cfg = apply_overrides(cfg, load_config_file(path))
        except (OSError, ValueError) as exc:
            raise UsageError(f"config file: {exc}") from None
    if args.preset:
        try:
            cfg = preset_config(args.preset, args.task, base=cfg)
        except KeyError as exc:
            raise UsageError(str(exc.args[0])) from None
    flag_overrides = {
        name: getattr(args, name)
        for name in _OVERRIDE_FLAGS
        if getattr(args, name) is not None
    }
    cfg = apply_overrides(cfg, flag_overrides)
    if args.no_sink_filter:
        cfg = replace(cfg, sink_filter=False)
    return cfg


def _load_grammar(args: argparse.Namespace) -> ToyGrammar:
    if args.grammar is None:
        return ToyGrammar()
    try:
        return load_grammar_file(args.grammar)
    except (OSError, ValueError) as exc:
        raise UsageError(f"grammar file: {exc}") from None


def _parse_prompt(spec: str | None) -> tuple[int, ...]:
    if not spec:
        return ()
    try:
        return tuple(int(t) for t in spec.split(","))
    except ValueError:
        raise UsageError(f"--prompt must be comma-separated integers, got {spec!r}") from None


def make_oracle(args: argparse.Namespace, cfg: SamplerConfig):
    """Build the oracle and the config consistent with its geometry.

    For the toy oracle the generation length always comes from the
    grammar; an explicit conflicting --gen-length is a usage error.
    """
    if args.oracle == "toy":
        grammar = _load_grammar(args)
        if args.gen_length is not None and args.gen_length != grammar.gen_length:
            raise UsageError(
                f"--gen-length {args.gen_length} conflicts with grammar "
                f"gen_length {grammar.gen_length}"
            )
        cfg = replace(cfg, gen_length=grammar.gen_length,
                      block_length=min(cfg.block_length, grammar.gen_length))
        return ToyOracle(grammar), cfg, grammar
    if args.oracle.startswith("remote:"):
        from .remote import RemoteOracle

        parts = args.oracle.split(":")
        if len(parts) != 3:
            raise UsageError(f"--oracle remote form is remote:HOST:PORT, got {args.oracle!r}")
        host, port_str = parts[1], parts[2]
        try:
            port = int(port_str)
        except ValueError:
            raise UsageError(f"--oracle port must be an integer, got {port_str!r}") from None
        prompt = _parse_prompt(args.prompt)
        cfg = replace(cfg, block_length=min(cfg.block_length, cfg.gen_length))
        oracle = RemoteOracle(host, port, prompt, cfg.gen_length, cfg.attn_layers)
        return oracle, cfg, None
    raise UsageError(f"--oracle must be 'toy' or 'remote:HOST:PORT', got {args.oracle!r}")


def _check_config(cfg: SamplerConfig) -> None:
    violations = validate_config(cfg)
    if violations:
        raise UsageError("config violations: " + "; ".join(violations))


def write_csv_rows(path: str, rows: list[RunRow]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow(csv_record(row))


def _summary_line(row: RunRow) -> str:
    m = row.metrics
    if m is None:
        return f"sampler={row.sampler} seed={row.seed} error={row.error}"
    speedup = "-" if m.speedup_vs_top1 is None else f"{m.speedup_vs_top1:.3f}"
    invalid = "-" if m.invalid_pairs is None else str(m.invalid_pairs)
    per_step = m.tokens_committed / m.nfe if m.nfe else 0.0
    return (
        f"sampler={row.sampler} seed={row.seed} nfe={m.nfe} tokens={m.tokens_committed} "
        f"tokens_per_step={per_step:.3f} invalid_pairs={invalid} "
        f"speedup_vs_top1={speedup} wall_ms={m.wall_ms:.2f}"
    )


def cmd_run(args: argparse.Namespace) -> int:
    cfg = resolve_config(args)
    oracle, cfg, grammar = make_oracle(args, cfg)
    _check_config(cfg)
    observer = None
    if args.trace:
        observer = TraceWriter(args.trace, args.sampler, args.seed, cfg,
                               oracle_label=args.oracle, prompt=oracle.prompt,
                               grammar=grammar)
    try:
        response, metrics = DECODERS[args.sampler](oracle, cfg, args.seed, observer)
    finally:
        if observer is not None:
            observer.close()
    row = RunRow(args.sampler, args.seed, cfg, metrics, response=response)
    print(_summary_line(row))
    if args.csv:
        write_csv_rows(args.csv, [row])
    return 0


def _parse_seeds(spec: str) -> list[int]:
    spec = spec.strip()
    try:
        if ".." in spec:
            lo, hi = spec.split("..", 1)
            return list(range(int(lo), int(hi) + 1))
        return [int(s) for s in spec.split(",")]
    except ValueError:
        raise UsageError(f"--seeds must be 'a,b,c' or 'a..b', got {spec!r}") from None


def _parse_sweep(entries: list[str]) -> list[tuple[str, list]]:
    axes: list[tuple[str, list]] = []
    for entry in entries:
        if "=" not in entry:
            raise UsageError(f"--sweep needs name=SPEC, got {entry!r}")
        name, _, spec = entry.partition("=")
        name = name.strip()
        if name not in _OVERRIDE_FLAGS:
            raise UsageError(f"unknown sweep axis {name!r}")
        typ = _OVERRIDE_FLAGS[name]
        try:
            if ":" in spec:
                start_s, stop_s, step_s = spec.split(":")
                start, stop, step = float(start_s), float(stop_s), float(step_s)
                if step <= 0 or stop < start:
                    raise ValueError
                values: list = []
                v = start
                while v <= stop + 1e-9:
                    values.append(typ(round(v, 10)))
                    v += step
            else:
                values = [typ(s) for s in spec.split(",")]
        except ValueError:
            raise UsageError(f"bad sweep spec {entry!r}") from None
        if not values:
            raise UsageError(f"sweep axis {name!r} is empty")
        axes.append((name, values))
    return axes


def _grid_from_axes(base: SamplerConfig, axes: list[tuple[str, list]]) -> list[SamplerConfig]:
    """Nested product; earlier axes vary slowest."""
    grid = [base]
    for name, values in axes:
        grid = [replace(cfg, **{name: v}) for cfg in grid for v in values]
    return grid


def cmd_grid(args: argparse.Namespace) -> int:
    base = resolve_config(args)
    oracle, base, _grammar = make_oracle(args, base)
    axes = _parse_sweep(args.sweep)
    grid = _grid_from_axes(base, axes)
    if not grid:
        raise UsageError("empty grid")
    for cfg in grid:
        _check_config(cfg)
    seeds = _parse_seeds(args.seeds)
    samplers = tuple(s.strip() for s in args.samplers.split(",") if s.strip())
    for s in samplers:
        if s not in DECODERS:
            raise UsageError(f"unknown sampler {s!r}")
    if not samplers:
        raise UsageError("no samplers selected")
    rows = run_comparison(oracle, grid, seeds, samplers=samplers)
    for row in rows:
        print(_summary_line(row))
    if args.csv:
        write_csv_rows(args.csv, rows)
    failures = [r for r in rows if r.error]
    return 1 if failures and len(failures) == len(rows) else 0


class _SinkCollector:
    """Decode observer accumulating per-step sink diagnostics."""

    def __init__(self, tau_sink: float):
        self.tau_sink = tau_sink
        self.rows: list[tuple[int, int, float, int]] = []

    def on_step(self, state, pred, update, cfg) -> None:
        report = sink_report(pred.attention, self.tau_sink)
        self.rows.extend(report.rows(state.step))

    def on_finish(self, response, metrics) -> None:
        pass


def cmd_sinks(args: argparse.Namespace) -> int:
    if args.trace:
        trace = read_trace(args.trace)
        rows = sink_rows_from_trace(trace)
    else:
        cfg = resolve_config(args)
        oracle, cfg, _grammar = make_oracle(args, cfg)
        if args.oracle != "toy":
            raise UsageError("sinks needs --trace or the toy oracle")
        _check_config(cfg)
        collector = _SinkCollector(cfg.tau_sink)
        DECODERS[args.sampler](oracle, cfg, args.seed, collector)
        rows = collector.rows
    if args.csv:
        with open(args.csv, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["step", "position", "mean_incoming_mass", "is_sink"])
            writer.writerows(rows)
    steps = {step for step, *_ in rows}
    flagged_counts: dict[int, int] = {}
    mass_sums: dict[int, float] = {}
    for step, pos, mass, is_sink in rows:
        mass_sums[pos] = mass_sums.get(pos, 0.0) + mass
        if is_sink:
            flagged_counts[pos] = flagged_counts.get(pos, 0) + 1
    n_steps = max(len(steps), 1)
    print(f"steps={n_steps} positions={len(mass_sums)} flagged_positions={len(flagged_counts)}")
    for pos in sorted(flagged_counts):
        mean_mass = mass_sums[pos] / n_steps
        print(f"position {pos}: flagged in {flagged_counts[pos]}/{n_steps} steps "
              f"(mean mass {mean_mass:.4f})")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {"run": cmd_run, "grid": cmd_grid, "sinks": cmd_sinks}
    try:
        return handlers[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OracleUnavailable as exc:
        print(f"oracle unavailable: {exc}", file=sys.stderr)
        return 1
    except OracleError as exc:
        print(f"oracle failure [{exc.code}]: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
