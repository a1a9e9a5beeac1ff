"""Command-line interface.

Subcommands:
  run     --scenario <path> [--seed N] [--out <dir>] [--deterministic]
  replay  --log <path>
  report  --log <path> --format json|csv
  compare --scenario <path> [--out <dir>]

Exit codes: 0 success, 2 scenario validation error, 3 log integrity error.
"""

from __future__ import annotations

import argparse
import csv
import io
import sys

from .backend import EventStore, VIEW_NAMES
from .errors import IntegrityError, ScenarioError
from .harness import compare_baseline, compute_metrics, run
from .scenario import load_scenario

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_INTEGRITY = 3


def _cmd_run(args) -> int:
    scenario = load_scenario(args.scenario)
    if args.seed is not None:
        scenario.seed = args.seed
    report, _ = run(scenario, out_dir=args.out, deterministic=args.deterministic)
    print(report.to_json())
    return EXIT_OK


def _cmd_replay(args) -> int:
    store = EventStore.load_jsonl(args.log)
    report = compute_metrics(store.events, args.log)
    views = {name: store.query_view(name) for name in VIEW_NAMES}
    print(report.to_json())
    print(f"replayed {len(store.events)} events; views: "
          + ", ".join(f"{k}={len(v)}" for k, v in views.items()))
    return EXIT_OK


def _report_csv(report) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["metric", "value"])
    d = report.to_dict()
    for key in (
        "mode", "precision", "recall", "readiness_rate",
        "delayed_service_rate", "stock_cost", "print_cost",
    ):
        writer.writerow([key, "" if d[key] is None else d[key]])
    for sig_id, entry in sorted(d["detection"].items()):
        writer.writerow([f"detected.{sig_id}", entry["detected"]])
        writer.writerow([f"latency_ms.{sig_id}", "" if entry["latency_ms"] is None else entry["latency_ms"]])
    return buf.getvalue()


def _cmd_report(args) -> int:
    store = EventStore.load_jsonl(args.log)
    report = compute_metrics(store.events, args.log)
    if args.format == "csv":
        print(_report_csv(report), end="")
    else:
        print(report.to_json())
    return EXIT_OK


def _cmd_compare(args) -> int:
    scenario = load_scenario(args.scenario)
    platform, baseline = compare_baseline(scenario, out_dir=args.out)
    print(
        '{"platform": %s, "baseline": %s}'
        % (platform.to_json(), baseline.to_json())
    )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fleetmaint")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a scenario end to end")
    p_run.add_argument("--scenario", required=True)
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--out", default=None)
    p_run.add_argument("--deterministic", action="store_true", default=True)
    p_run.set_defaults(func=_cmd_run)

    p_replay = sub.add_parser("replay", help="rebuild views and metrics from a log")
    p_replay.add_argument("--log", required=True)
    p_replay.set_defaults(func=_cmd_replay)

    p_report = sub.add_parser("report", help="compute metrics from a log")
    p_report.add_argument("--log", required=True)
    p_report.add_argument("--format", choices=("json", "csv"), default="json")
    p_report.set_defaults(func=_cmd_report)

    p_compare = sub.add_parser("compare", help="paired platform vs baseline run")
    p_compare.add_argument("--scenario", required=True)
    p_compare.add_argument("--out", default=None)
    p_compare.set_defaults(func=_cmd_compare)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ScenarioError as exc:
        print(f"scenario error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (IntegrityError, FileNotFoundError) as exc:
        print(f"integrity error: {exc}", file=sys.stderr)
        return EXIT_INTEGRITY


if __name__ == "__main__":
    sys.exit(main())
