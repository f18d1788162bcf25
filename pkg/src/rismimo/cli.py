"""Command-line entry point: run experiments, extract CDFs, validate, sweep."""

import argparse
import json
import os
import sys
from dataclasses import fields, replace

from .errors import ConfigError, RisMimoError
from .harness import emit_cdf, emit_results, load_results, run_experiment
from .scenario import Scenario, load_scenario, save_scenario, scenario_to_dict


def _parse_field_value(scenario: Scenario, name: str, raw: str):
    flat = name.split(".")[-1]
    for f in fields(Scenario):
        if f.name == flat:
            current = getattr(scenario, flat)
            if isinstance(current, bool):
                return flat, raw.lower() in ("1", "true", "yes")
            if isinstance(current, int):
                return flat, int(raw)
            if isinstance(current, float):
                return flat, float(raw)
            if isinstance(current, str):
                return flat, raw
            return flat, json.loads(raw)
    raise ConfigError(f"unknown scenario field {name!r}")


def _cmd_run(args) -> int:
    scenario = load_scenario(args.scenario)
    overrides = {}
    for item in args.set or []:
        if "=" not in item:
            raise ConfigError(f"--set expects field=value, got {item!r}")
        name, raw = item.split("=", 1)
        key, val = _parse_field_value(scenario, name.strip(), raw.strip())
        overrides[key] = val
    if overrides:
        scenario = replace(scenario, **overrides).validate()
    result = run_experiment(scenario, workers=args.workers)
    emit_results(result, args.output, "json")
    if args.csv:
        emit_results(result, args.csv, "csv")
    s = result.summary()
    print(f"{scenario.name}: median SE {s['median_se']:.3f}, "
          f"90%-likely SE {s['likely90_se']:.3f} bit/s/Hz "
          f"({s['drops']} drops, tau_p={s['tau_p']}, {s['elapsed_s']:.1f}s)")
    print(f"results written to {args.output}")
    return 0


def _cmd_cdf(args) -> int:
    result = load_results(args.results)
    emit_cdf(result, args.output)
    print(f"CDF table written to {args.output}")
    return 0


def _cmd_validate(args) -> int:
    from .validate import run_all

    results = run_all(full=args.full)
    failed = 0
    for name, ok, detail in results:
        tag = "PASS" if ok else "FAIL"
        print(f"[{tag}] {name}: {detail}")
        failed += 0 if ok else 1
    if failed:
        print(f"{failed} of {len(results)} checks failed")
        return 1
    print(f"all {len(results)} checks passed")
    return 0


def _cmd_sweep(args) -> int:
    scenario = load_scenario(args.scenario)
    rows = []
    os.makedirs(args.outdir, exist_ok=True)
    for raw in args.values.split(","):
        key, val = _parse_field_value(scenario, args.field, raw.strip())
        sc = replace(scenario, **{key: val, "name": f"{scenario.name}-{key}-{raw.strip()}"})
        sc.validate()
        result = run_experiment(sc, workers=args.workers)
        out = os.path.join(args.outdir, f"{sc.name}.json")
        emit_results(result, out, "json")
        s = result.summary()
        rows.append((raw.strip(), s["median_se"], s["likely90_se"]))
        print(f"{key}={raw.strip()}: median {s['median_se']:.3f}, "
              f"90%-likely {s['likely90_se']:.3f} -> {out}")
    summary = os.path.join(args.outdir, "sweep_summary.csv")
    with open(summary, "w") as fh:
        fh.write(f"{args.field},median_se,likely90_se\n")
        for raw, med, l90 in rows:
            fh.write(f"{raw},{med!r},{l90!r}\n")
    print(f"summary written to {summary}")
    return 0


def _cmd_init(args) -> int:
    from .scenario import desk_scenario, paper_scenario

    sc = desk_scenario() if args.preset == "desk" else paper_scenario()
    save_scenario(sc, args.output)
    print(f"{args.preset} scenario written to {args.output}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rismimo",
        description="Link-level simulator for RIS-assisted uplink massive MIMO.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run an experiment from a scenario file")
    p.add_argument("scenario", help="scenario YAML file")
    p.add_argument("-o", "--output", default="results.json", help="result JSON path")
    p.add_argument("--csv", help="also write per-UE SE rows as CSV")
    p.add_argument("--workers", type=int, help="parallel drop workers")
    p.add_argument("--set", action="append", metavar="FIELD=VALUE",
                   help="override a scenario field (repeatable)")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("cdf", help="extract the empirical CDF table from results")
    p.add_argument("results", help="result JSON from `run`")
    p.add_argument("-o", "--output", default="cdf.csv", help="CDF CSV path")
    p.set_defaults(func=_cmd_cdf)

    p = sub.add_parser("validate", help="run the built-in oracle checks")
    p.add_argument("--full", action="store_true", help="use larger Monte-Carlo sizes")
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("sweep", help="grid over one scenario field")
    p.add_argument("scenario", help="scenario YAML file")
    p.add_argument("--field", required=True, help="scenario field name")
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--outdir", default="sweep", help="output directory")
    p.add_argument("--workers", type=int, help="parallel drop workers")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("init", help="write a preset scenario file")
    p.add_argument("preset", choices=("desk", "paper"), help="preset name")
    p.add_argument("-o", "--output", default="scenario.yaml", help="output path")
    p.set_defaults(func=_cmd_init)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except RisMimoError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
