"""Command line entry points: simulate, sweep, validate."""
from __future__ import annotations

import argparse
import sys

from .harness import PRESET_NAMES, default_workers, run_preset, run_scenario
from .scenario import Scenario, ScenarioError, load_scenario


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gridhold",
        description="Deterministic mesoscopic simulator for signalized grid networks",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run all replications of a scenario")
    sim.add_argument("--scenario", required=True, help="scenario JSON file")
    sim.add_argument("--seed", type=int, default=None,
                     help="run only this seed instead of the scenario's list")
    sim.add_argument("--out", default=None, help="output directory")

    sw = sub.add_parser("sweep", help="run a named experiment preset")
    sw.add_argument("--preset", required=True, choices=PRESET_NAMES)
    sw.add_argument("--out", default=None, help="output directory")

    val = sub.add_parser("validate", help="check a scenario file")
    val.add_argument("--scenario", required=True, help="scenario JSON file")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)

    if args.command == "validate":
        try:
            scenario = load_scenario(args.scenario)
        except ScenarioError as exc:
            print(f"invalid scenario: {exc}", file=sys.stderr)
            return 2
        except (OSError, ValueError) as exc:
            print(f"cannot read scenario: {exc}", file=sys.stderr)
            return 2
        print("scenario OK")
        print(scenario.dumps())
        return 0

    if args.command == "simulate":
        try:
            scenario = load_scenario(args.scenario)
        except (ScenarioError, OSError, ValueError) as exc:
            print(f"cannot load scenario: {exc}", file=sys.stderr)
            return 2
        if args.seed is not None:
            from dataclasses import replace
            scenario = replace(scenario, seeds=(args.seed,))
        out = args.out if args.out is not None else scenario.output.dir
        results = run_scenario(scenario, out, workers=default_workers())
        for r in results:
            verdict = "stable" if r.audit.stable else "unstable"
            print(f"seed {r.seed}: {r.exited}/{r.injected} trips completed, "
                  f"total delay {r.total_delay_s:.0f} s, {verdict}")
        print(f"outputs in {out}")
        return 0

    if args.command == "sweep":
        out = args.out if args.out is not None else f"sweep_{args.preset}"
        run_preset(args.preset, out, workers=default_workers())
        print(f"sweep outputs in {out}")
        return 0

    return 1


if __name__ == "__main__":
    raise SystemExit(main())
