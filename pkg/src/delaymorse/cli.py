"""Command-line entry: run, validate, and sweep scenario files.

Exit codes: 0 success, 2 configuration error, 3 hypothesis validation
failure, 4 runtime failure (bound escape or non-convergence).
"""

from __future__ import annotations

import argparse
import json
import sys

from .delay import NoRoot, NonConvergence
from .integrator import BoundViolation
from .scenario import (
    ConfigError,
    ValidationError,
    load_scenario,
    parse_config,
    run_scenario,
    run_sweep,
    run_validate,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_VALIDATION = 3
EXIT_RUNTIME = 4


def _load(path: str):
    with open(path) as fh:
        return load_scenario(parse_config(fh.read()))


def _apply_overrides(scn, args):
    raw = dict(scn.raw)
    if getattr(args, "step", None) is not None:
        raw["run.step"] = repr(args.step)
    if getattr(args, "horizon", None) is not None:
        raw["run.horizon"] = repr(args.horizon)
    if raw != scn.raw:
        scn = load_scenario(raw)
    return scn


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="delaymorse",
        description="Morse decomposition experiments for scalar delayed negative feedback",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="integrate an ensemble and classify it")
    run_p.add_argument("config")
    run_p.add_argument("--out-dir", required=True)
    run_p.add_argument("--threads", type=int, default=1)
    run_p.add_argument("--seed-override", type=int, default=None)
    run_p.add_argument("--step", type=float, default=None)
    run_p.add_argument("--horizon", type=float, default=None)
    run_p.add_argument("--plots", action="store_true")

    val_p = sub.add_parser("validate", help="check the standing hypotheses numerically")
    val_p.add_argument("config")
    val_p.add_argument("--samples", type=int, default=200)

    sweep_p = sub.add_parser("sweep", help="chart root counts over a coefficient grid")
    sweep_p.add_argument("config")
    sweep_p.add_argument("--out-dir", required=True)
    sweep_p.add_argument("--plots", action="store_true")

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        scn = _load(args.config)
        if args.command == "run":
            scn = _apply_overrides(scn, args)
            doc = run_scenario(
                scn,
                args.out_dir,
                threads=args.threads,
                seed_override=args.seed_override,
                plots=args.plots,
            )
            counts = doc["report"]["label_counts"]
            total = doc["report"]["runs"]
            print(f"{scn.name}: {total} runs")
            for label, count in counts.items():
                print(f"  {label}: {count}")
            violations = doc["report"]["ordering_violations"]
            print(f"  ordering violations: {len(violations)}")
            return EXIT_OK
        if args.command == "validate":
            out = run_validate(scn, samples=args.samples)
            print(json.dumps(out, sort_keys=True, indent=2))
            print(f"{scn.name}: hypotheses hold")
            return EXIT_OK
        if args.command == "sweep":
            rows = run_sweep(scn, args.out_dir, plots=args.plots)
            print(f"{scn.name}: {len(rows)} grid points -> {args.out_dir}/sweep.csv")
            return EXIT_OK
        raise ConfigError(f"unknown command {args.command!r}")
    except OSError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except ValidationError as err:
        print(f"validation failure: {err}", file=sys.stderr)
        return EXIT_VALIDATION
    except (BoundViolation, NonConvergence, NoRoot) as err:
        print(f"runtime failure: {type(err).__name__}: {err}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
