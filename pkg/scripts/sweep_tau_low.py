#!/usr/bin/env python3
"""Sweep tau_low and report NFE / tokens-per-step, reproducing the
monotone commit-rate trade-off at toy scale.

Usage:
    python scripts/sweep_tau_low.py --start 0.6 --stop 0.9 --step 0.05
"""

import argparse
import sys
from dataclasses import replace

from dawn.core import SamplerConfig
from dawn.samplers import decode_dawn, run_comparison
from dawn.toy import ToyGrammar, ToyOracle, load_grammar_file
from dawn.cli import write_csv_rows


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--grammar", default=None)
    ap.add_argument("--start", type=float, default=0.60)
    ap.add_argument("--stop", type=float, default=0.90)
    ap.add_argument("--step", type=float, default=0.05)
    ap.add_argument("--seeds", type=int, default=50)
    ap.add_argument("--tau-sink", type=float, default=0.01)
    ap.add_argument("--csv", default=None)
    args = ap.parse_args()

    grammar = load_grammar_file(args.grammar) if args.grammar else ToyGrammar()
    oracle = ToyOracle(grammar)
    base = SamplerConfig(gen_length=grammar.gen_length,
                         block_length=min(32, grammar.gen_length),
                         tau_sink=args.tau_sink)

    values = []
    v = args.start
    while v <= args.stop + 1e-9:
        values.append(round(v, 10))
        v += args.step
    grid = [replace(base, tau_low=tl) for tl in values]

    print(f"{'tau_low':>8} {'mean_nfe':>9} {'tokens_per_step':>16} {'invalid':>8}")
    for cfg in grid:
        nfes, rates, invalid = [], [], 0
        for seed in range(args.seeds):
            _, m = decode_dawn(oracle, cfg, seed=seed)
            nfes.append(m.nfe)
            rates.append(m.tokens_committed / m.nfe)
            invalid += m.invalid_pairs or 0
        print(f"{cfg.tau_low:8.2f} {sum(nfes)/len(nfes):9.2f} "
              f"{sum(rates)/len(rates):16.3f} {invalid:8d}")

    if args.csv:
        rows = run_comparison(oracle, grid, seeds=list(range(args.seeds)),
                              samplers=("dawn", "top1"))
        write_csv_rows(args.csv, rows)
        print(f"wrote {len(rows)} rows to {args.csv}")
    return 0


if __name__ == "__main__":
    sys.exit(main())