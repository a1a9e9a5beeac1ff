#!/usr/bin/env python3
"""Write one of the built-in scenario templates to a YAML file.

The emitted file is plain scenario data (`schema: 1`): edit it by hand
and feed it back through `fleetmaint run --scenario <path>`.
"""

import argparse

from fleetmaint.fleetgen import detection_scenario, fleet_scenario, single_spike_scenario
from fleetmaint.scenario import parse_scenario, save_scenario

TEMPLATES = {
    "single-spike": single_spike_scenario,
    "fleet": fleet_scenario,
    "detection": detection_scenario,
}


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("template", choices=sorted(TEMPLATES))
    parser.add_argument("path")
    parser.add_argument("--seed", type=int, default=None)
    args = parser.parse_args()

    doc = TEMPLATES[args.template]()
    if args.seed is not None:
        doc["seed"] = args.seed
    parse_scenario(doc)  # validate before writing
    save_scenario(doc, args.path)
    print(f"wrote {args.template} scenario to {args.path}")


if __name__ == "__main__":
    main()
