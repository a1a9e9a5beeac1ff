#!/usr/bin/env python3
"""Detection-quality sweep: recall/precision versus spike magnitude.

Runs the 50-vehicle, 10-signature scenario at edge threshold 2.0 for a
range of spike magnitudes and prints one row per magnitude.
"""

import argparse

from fleetmaint.fleetgen import detection_scenario
from fleetmaint.harness import run
from fleetmaint.scenario import parse_scenario


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--vehicles", type=int, default=50)
    parser.add_argument("--signatures", type=int, default=10)
    parser.add_argument("--seed", type=int, default=13)
    parser.add_argument(
        "--magnitudes", type=float, nargs="+", default=[4.0, 8.0, 12.0, 16.0, 20.0]
    )
    args = parser.parse_args()

    print("magnitude  recall  precision  mean_latency_ms")
    for magnitude in args.magnitudes:
        doc = detection_scenario(
            n_vehicles=args.vehicles,
            n_signatures=args.signatures,
            seed=args.seed,
            magnitude=magnitude,
        )
        report, _ = run(parse_scenario(doc))
        latencies = [
            d["latency_ms"] for d in report.detection.values() if d["detected"]
        ]
        mean_latency = sum(latencies) / len(latencies) if latencies else None
        print(f"{magnitude:9.1f}  {report.recall:6.2f}  {report.precision!s:>9}  {mean_latency}")


if __name__ == "__main__":
    main()
