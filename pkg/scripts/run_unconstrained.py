#!/usr/bin/env python3
"""Seed-mean MSD curves for the unconstrained benchmark.

Runs the diffusion strategy at two step sizes and optionally the
centralized and consensus (ADMM-style) baselines at the same step sizes,
writing one CSV per algorithm.
"""

import argparse
from pathlib import Path

import yaml

from coupled_diffusion import config_from_dict, emit_results, run_scenario

CONFIG = Path(__file__).resolve().parent.parent / "configs" / "unconstrained.yaml"


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="results", help="output directory")
    ap.add_argument("--seeds", type=int, default=20, help="number of seeds to average")
    ap.add_argument("--iters", type=int, default=None)
    ap.add_argument("--baselines", action="store_true",
                    help="also run the centralized and admm baselines")
    args = ap.parse_args()

    raw = yaml.safe_load(CONFIG.read_text())
    raw["scenario"]["seeds"] = list(range(args.seeds))
    if args.iters:
        raw["engine"]["iterations"] = args.iters
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    algorithms = ["coupled"] + (["centralized", "admm"] if args.baselines else [])
    for algo in algorithms:
        raw["engine"]["algorithm"] = algo
        table = run_scenario(config_from_dict(raw))
        path = out / f"unconstrained_{algo}.csv"
        emit_results(table, path)
        print(path)


if __name__ == "__main__":
    main()
