"""Command-line entry point: ``risshare run --config cfg.json --sweep pmax ...``."""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from .driver import SWEEPS, AoConfig, emit_csv, emit_trace, run_sweep
from .scenario import Scenario

log = logging.getLogger("risshare")


def load_config(path: str | Path) -> tuple[Scenario, AoConfig]:
    """Split a JSON document into Scenario fields and AO fields.

    Keys belonging to neither are rejected.
    """
    with open(path) as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise ValueError("config must be a JSON object")
    scen_keys = {f.name for f in dataclasses.fields(Scenario)}
    ao_keys = {f.name for f in dataclasses.fields(AoConfig)}
    unknown = set(data) - scen_keys - ao_keys
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    scenario = Scenario.from_dict({k: v for k, v in data.items() if k in scen_keys})
    ao = AoConfig.from_dict({k: v for k, v in data.items() if k in ao_keys})
    return scenario, ao


def _parse_values(text: str | None):
    if text is None:
        return None
    return [float(x) for x in text.split(",") if x.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="risshare", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run a Monte-Carlo sweep and write a CSV table")
    run.add_argument("--config", required=True, help="JSON file with Scenario and AO fields")
    run.add_argument("--sweep", required=True, choices=sorted(SWEEPS))
    run.add_argument("--trials", type=int, default=1)
    run.add_argument("--seed", type=int, default=None, help="base seed (default: rng_seed from the config)")
    run.add_argument("--out", required=True, help="output CSV path")
    run.add_argument("--discrete-bits", type=int, default=None, help="codebook bits for quantisation")
    run.add_argument("--trace", action="store_true", help="also write per-iteration traces next to --out")
    run.add_argument("--values", default=None, help="comma-separated sweep values (default per sweep)")
    run.add_argument("--workers", type=int, default=1, help="worker processes for the trials")
    run.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        if args.trials < 1:
            raise ValueError("--trials must be >= 1")
        if args.seed is not None and args.seed < 0:
            raise ValueError("--seed must be non-negative")
        if args.discrete_bits is not None and args.discrete_bits < 1:
            raise ValueError("--discrete-bits must be >= 1")
        scenario, ao = load_config(args.config)
        values = _parse_values(args.values)
        if values is not None and not values:
            raise ValueError("--values is empty")
        out = Path(args.out)
        if not out.parent.exists():
            raise OSError(f"output directory {out.parent} does not exist")
        results = {} if args.trace else None
        log.info("sweep %s, %d trials", args.sweep, args.trials)
        table = run_sweep(
            scenario,
            args.sweep,
            values,
            trials=args.trials,
            cfg=ao,
            seed=args.seed,
            discrete_bits=args.discrete_bits,
            workers=args.workers,
            record=args.trace,
            results=results,
        )
        emit_csv(table, out)
        if args.trace:
            emit_trace(results, out.with_suffix(".trace.csv"))
    except (OSError, ValueError, TypeError, json.JSONDecodeError) as exc:
        print(f"risshare: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
