#!/usr/bin/env python3
"""Compare the three samplers on a toy grammar and dump the run matrix.

Usage:
    python scripts/run_benchmark.py --seeds 100 --csv runs.csv
"""

import argparse
import sys

from dawn.core import SamplerConfig
from dawn.samplers import run_comparison
from dawn.toy import ToyGrammar, ToyOracle, load_grammar_file
from dawn.cli import write_csv_rows


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--grammar", default=None, help="grammar file (default: built-in)")
    ap.add_argument("--seeds", type=int, default=100)
    ap.add_argument("--block-length", type=int, default=32)
    ap.add_argument("--csv", default=None)
    args = ap.parse_args()

    grammar = load_grammar_file(args.grammar) if args.grammar else ToyGrammar()
    oracle = ToyOracle(grammar)
    cfg = SamplerConfig(gen_length=grammar.gen_length,
                        block_length=min(args.block_length, grammar.gen_length))
    rows = run_comparison(oracle, [cfg], seeds=list(range(args.seeds)))

    by_sampler: dict[str, list] = {}
    for row in rows:
        by_sampler.setdefault(row.sampler, []).append(row)
    for sampler, group in by_sampler.items():
        ok = [r for r in group if r.metrics is not None]
        nfe = sum(r.metrics.nfe for r in ok) / max(len(ok), 1)
        invalid = sum(r.metrics.invalid_pairs or 0 for r in ok)
        print(f"{sampler:>11}: mean_nfe={nfe:7.2f} total_invalid_pairs={invalid} "
              f"failures={len(group) - len(ok)}")
    if args.csv:
        write_csv_rows(args.csv, rows)
        print(f"wrote {len(rows)} rows to {args.csv}")
    return 0


if __name__ == "__main__":
    sys.exit(main())