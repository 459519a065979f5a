"""Command-line entry points: paris-bench and paris-check."""

from __future__ import annotations

import argparse
import json
import sys

from . import bench, checker
from .topology import desk_config, load_config
from .trace import read_trace


def _load(config_path: str | None):
    if config_path is None:
        return desk_config()
    return load_config(config_path)


def bench_main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="paris-bench",
        description="Run simulated experiments and analyze update visibility.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run one seeded experiment")
    run_p.add_argument("--config", help="cluster/workload config file (INI)")
    run_p.add_argument("--protocol", choices=bench.PROTOCOLS, default="paris")
    run_p.add_argument("--seed", type=int, default=0)
    run_p.add_argument("--out", required=True, help="output directory")
    run_p.add_argument("--gc-verify", action="store_true",
                       help="re-check every open snapshot read after each GC round")

    vis_p = sub.add_parser("visibility", help="update-visibility CDF from a trace")
    vis_p.add_argument("trace", help="trace file emitted by a run")
    vis_p.add_argument("--config", help="config the trace was produced with")
    vis_p.add_argument("--protocol", choices=bench.PROTOCOLS, default="paris")
    vis_p.add_argument("--out", help="write the CDF table as CSV here")

    args = parser.parse_args(argv)
    if args.command == "run":
        config = _load(args.config)
        result = bench.run_experiment(
            config, args.seed, args.protocol, out_dir=args.out, gc_verify=args.gc_verify
        )
        for name, value in result.metrics.rows():
            print(f"{name}: {value}")
        print(f"trace_digest: {result.digest}")
        return 0

    config = _load(args.config)
    events = read_trace(args.trace)
    samples = bench.visibility_samples(events, config, args.protocol)
    table = bench.visibility_cdf(samples)
    if args.out:
        bench.write_visibility_csv(table, args.out)
    print("percentile\tmean_visibility_us")
    for pct, value in table:
        print(f"{pct}\t{value:.1f}")
    return 0


def check_main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="paris-check",
        description="Check a trace against the protocol's correctness properties.",
    )
    parser.add_argument("trace", help="trace file to analyze")
    parser.add_argument("--oracle-bound", type=int, default=None,
                        help="also run the brute-force oracle up to this many versions")
    parser.add_argument("--report", choices=("text", "json"), default="text")
    args = parser.parse_args(argv)

    events = read_trace(args.trace)
    verdicts = checker.run_all_checks(events, oracle_bound=args.oracle_bound)
    if args.report == "json":
        print(json.dumps(
            [
                {
                    "name": v.name,
                    "ok": v.ok,
                    "checked": v.checked,
                    "violations": v.violations,
                }
                for v in verdicts
            ],
            indent=2,
        ))
    else:
        for v in verdicts:
            print(v.summary())
            for violation in v.violations[:10]:
                print(f"  - {violation}")
    return 0 if all(v.ok for v in verdicts) else 1


if __name__ == "__main__":
    sys.exit(check_main())
