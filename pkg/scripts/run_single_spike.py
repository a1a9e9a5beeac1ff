#!/usr/bin/env python3
"""Run the one-vehicle spike walkthrough and print its metrics report.

The scenario injects a single 20-sigma spike two hours before arrival
with zero depot stock, so the only way the order can be Ready at the
destination is the local printer.
"""

import argparse

from fleetmaint.fleetgen import single_spike_scenario
from fleetmaint.harness import run
from fleetmaint.scenario import parse_scenario


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seed", type=int, default=7)
    parser.add_argument("--out", default=None, help="directory for events.jsonl + report.json")
    args = parser.parse_args()

    scenario = parse_scenario(single_spike_scenario(seed=args.seed))
    report, store = run(scenario, out_dir=args.out)
    print(report.to_json())
    order = next(iter(store.views.orders.values()), None)
    if order:
        print(f"order {order['order_id']}: {order['status']} via {order['plan']['source']}")


if __name__ == "__main__":
    main()
