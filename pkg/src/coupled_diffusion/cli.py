"""Command line entry point.

    coupled-diffusion run --config cfg.yaml [--out DIR] [--seeds 0,1,2]
                          [--scenario ID] [--mu 0.002,0.001] [--eta 100]
                          [--iters 2000]

Exit code 0 on success; on failure a single machine-readable line
`error: {...json...}` goes to stderr and the exit code is nonzero.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import yaml

from .errors import SimulationError
from .harness import ScenarioConfig, config_from_dict, emit_results, run_scenario


def _parse_args(argv):
    parser = argparse.ArgumentParser(prog="coupled-diffusion")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run a scenario described by a config file")
    run.add_argument("--config", required=True, help="YAML config file")
    run.add_argument("--out", default=".", help="output directory for CSV results")
    run.add_argument("--seeds", help="comma-separated seed list override")
    run.add_argument("--scenario", help="scenario id override")
    run.add_argument("--mu", help="comma-separated step-size list override")
    run.add_argument("--eta", help="comma-separated penalty list override")
    run.add_argument("--iters", type=int, help="iteration budget override")
    return parser.parse_args(argv)


def _apply_overrides(raw: dict, args) -> dict:
    raw = dict(raw)
    raw.setdefault("scenario", {})
    raw.setdefault("engine", {})
    raw.setdefault("penalty", {})
    if args.scenario:
        raw["scenario"]["id"] = args.scenario
    if args.seeds:
        raw["scenario"]["seeds"] = [int(s) for s in args.seeds.split(",")]
    if args.mu:
        raw["engine"]["mu"] = [float(m) for m in args.mu.split(",")]
    if args.eta:
        raw["penalty"]["eta"] = [float(e) for e in args.eta.split(",")]
    if args.iters is not None:
        raw["engine"]["iterations"] = args.iters
    return raw


def main(argv=None) -> int:
    args = _parse_args(argv if argv is not None else sys.argv[1:])
    try:
        raw = yaml.safe_load(Path(args.config).read_text()) or {}
        cfg: ScenarioConfig = config_from_dict(_apply_overrides(raw, args))
        table = run_scenario(cfg)
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        out_path = out_dir / f"{cfg.scenario}.csv"
        emit_results(table, out_path)
        print(out_path)
        return 0
    except (SimulationError, OSError, yaml.YAMLError, ValueError) as exc:
        print(
            "error: " + json.dumps({"type": type(exc).__name__, "message": str(exc)}),
            file=sys.stderr,
        )
        return 2


if __name__ == "__main__":
    sys.exit(main())
