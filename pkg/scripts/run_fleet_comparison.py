#!/usr/bin/env python3
"""Paired platform-vs-baseline study on a seeded fleet of short trips.

Runs the same scenario twice on one seed: once with edge detection,
cloud diagnosis, and print-on-demand fulfillment active, and once in
arrival-discovery mode where failures are only found at the destination.
Prints the delayed-service rates side by side.
"""

import argparse

from fleetmaint.fleetgen import fleet_scenario
from fleetmaint.harness import compare_baseline
from fleetmaint.scenario import parse_scenario


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--trips", type=int, default=1000)
    parser.add_argument("--failures", type=int, default=3)
    parser.add_argument("--seed", type=int, default=11)
    parser.add_argument("--printers", type=int, default=3)
    parser.add_argument("--zero-capacity", action="store_true",
                        help="remove all printers (no order can become Ready)")
    parser.add_argument("--out", default=None)
    args = parser.parse_args()

    doc = fleet_scenario(
        n_trips=args.trips,
        n_failures=args.failures,
        seed=args.seed,
        n_printers=args.printers,
        zero_capacity=args.zero_capacity,
    )
    platform, baseline = compare_baseline(parse_scenario(doc), out_dir=args.out)
    print(f"trips={args.trips} failures={args.failures} seed={args.seed}")
    print(f"platform delayed_service_rate: {platform.delayed_service_rate}")
    print(f"baseline delayed_service_rate: {baseline.delayed_service_rate}")
    print(f"platform print_cost: {platform.print_cost}  stock_cost: {platform.stock_cost}")


if __name__ == "__main__":
    main()
