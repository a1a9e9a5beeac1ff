"""Programmatic scenario builders used by the experiment scripts and tests.

Each builder returns a raw scenario dict (`schema: 1`) that
`scenario.parse_scenario` accepts and `scenario.save_scenario` can write
to disk, so the generated experiments stay editable data.
"""

from __future__ import annotations

SENSOR_IDS = ("s0", "s1", "s2", "s3")
SPIKE_ONCE = 10**6  # every_n large enough that the spike fires once per trip


def _sensors(mean: float = 10.0, stddev: float = 1.0) -> list[dict]:
    return [
        {"sensor_id": sid, "unit": "unitless", "mean": mean, "stddev": stddev}
        for sid in SENSOR_IDS
    ]


def _engine_part(print_minutes: int) -> list[dict]:
    return [
        {
            "part_id": "part-engine",
            "category": "engine",
            "print_minutes": print_minutes,
            "sensors": {sid: 1.0 for sid in SENSOR_IDS},
        }
    ]


def _overheat_classifier() -> dict:
    # unit weight on the spiked sensor: confidence equals its z-score
    return {"overheat": {"weights": {"s0": 1.0}, "bias": 0.0}}


def single_spike_scenario(seed: int = 7) -> dict:
    """One vehicle, one 20-sigma spike, zero stock, one local printer.

    Print takes 60 minutes and the spike fires 120 minutes before
    arrival, so the order must come out Ready via print-on-demand.
    """
    hour = 3_600_000
    return {
        "schema": 1,
        "seed": seed,
        "cooldown_ms": 60_000,
        "thresholds": {
            "alert_threshold": 3.0,
            "confidence_margin": 1.0,
            "order_threshold": 50.0,
            "logistic_a": 2.0,
            "logistic_s0": 2.0,
            "horizon_ms": hour,
        },
        "lof": {"k": 8, "window_size": 128, "reach_floor": 1e-9},
        "fault_model": {"latency_ms": 0, "drop_probability": 0.0,
                        "duplicate_probability": 0.0, "max_retries": 3,
                        "retry_backoff_ms": 1000},
        "model_update_every": 1_000_000,
        "label_backfill_delay_ms": 60_000,
        "service_minutes": 60,
        "costs": {"holding_cost_per_part_day": 1.0, "print_cost_per_part": 5.0},
        "locations": ["origin-city", "dest-city"],
        "transit_ms": [[0, 30 * 60_000], [30 * 60_000, 0]],
        "parts": _engine_part(print_minutes=60),
        "damage_table": {"overheat": 1000.0},
        "depots": [{"depot_id": "depot-dest", "location": "dest-city", "stock": {}}],
        "printers": [{"printer_id": "printer-dest", "location": "dest-city"}],
        "staff": [
            {
                "staff_id": "staff-1",
                "location": "dest-city",
                "skills": ["engine"],
                "available_from": 0,
                "available_to": 10 * hour,
            }
        ],
        "vehicles": [
            {
                "vehicle_id": "v1",
                "sample_period_ms": 10_000,
                "route": {
                    "origin": "origin-city",
                    "destination": "dest-city",
                    "departure_ts": 0,
                    "arrival_ts": 3 * hour,
                },
                "sensors": _sensors(),
            }
        ],
        "signatures": [
            {
                "signature_id": "sig-spike",
                "vehicle_id": "v1",
                "sensors": ["s0"],
                "onset_ts": hour,
                "pattern": {"type": "spike", "magnitude": 20.0, "every_n": SPIKE_ONCE},
                "part_id": "part-engine",
                "label": "overheat",
            }
        ],
        "initial_classifier": _overheat_classifier(),
    }


def fleet_scenario(
    n_trips: int = 1000,
    n_failures: int = 3,
    seed: int = 11,
    n_printers: int = 3,
    zero_capacity: bool = False,
) -> dict:
    """A fleet of short trips with a small injected failure fraction.

    With ``zero_capacity`` there are no printers and no stock, so no
    order can ever become Ready and the platform cannot beat baseline.
    """
    minute = 60_000
    trip_ms = 30 * minute
    period = 30_000
    onset = 10 * minute
    failure_trips = [
        (i * n_trips) // n_failures for i in range(n_failures)
    ] if n_failures else []

    vehicles = []
    signatures = []
    for i in range(n_trips):
        vid = f"trip-{i:04d}"
        vehicles.append(
            {
                "vehicle_id": vid,
                "sample_period_ms": period,
                "route": {
                    "origin": "hub",
                    "destination": "dest",
                    "departure_ts": 0,
                    "arrival_ts": trip_ms,
                },
                "sensors": _sensors(),
            }
        )
        if i in failure_trips:
            signatures.append(
                {
                    "signature_id": f"sig-{vid}",
                    "vehicle_id": vid,
                    "sensors": ["s0"],
                    "onset_ts": onset,
                    "pattern": {"type": "spike", "magnitude": 20.0, "every_n": SPIKE_ONCE},
                    "part_id": "part-engine",
                    "label": "overheat",
                }
            )

    printers = (
        []
        if zero_capacity
        else [
            {"printer_id": f"printer-{j}", "location": "dest"}
            for j in range(n_printers)
        ]
    )
    return {
        "schema": 1,
        "seed": seed,
        "cooldown_ms": 5 * minute,
        "thresholds": {
            "alert_threshold": 3.0,
            "confidence_margin": 1.0,
            "order_threshold": 50.0,
            "logistic_a": 2.0,
            "logistic_s0": 2.0,
            "horizon_ms": trip_ms,
        },
        "lof": {"k": 8, "window_size": 64, "reach_floor": 1e-9},
        "fault_model": {"latency_ms": 0, "drop_probability": 0.0,
                        "duplicate_probability": 0.0, "max_retries": 3,
                        "retry_backoff_ms": 1000},
        "model_update_every": 1_000_000,
        "label_backfill_delay_ms": minute,
        "service_minutes": 30,
        "costs": {"holding_cost_per_part_day": 1.0, "print_cost_per_part": 5.0},
        "locations": ["hub", "dest"],
        "transit_ms": [[0, 60 * minute], [60 * minute, 0]],
        "parts": _engine_part(print_minutes=10),
        "damage_table": {"overheat": 1000.0},
        "depots": [],
        "printers": printers,
        "staff": [
            {
                "staff_id": "staff-1",
                "location": "dest",
                "skills": ["engine"],
                "available_from": 0,
                "available_to": 100 * trip_ms,
            }
        ],
        "vehicles": vehicles,
        "signatures": signatures,
        "initial_classifier": _overheat_classifier(),
    }


def detection_scenario(
    n_vehicles: int = 50, n_signatures: int = 10, seed: int = 13, magnitude: float = 12.0
) -> dict:
    """50 short trips, 10 spike signatures, edge threshold 2.0."""
    doc = fleet_scenario(
        n_trips=n_vehicles, n_failures=n_signatures, seed=seed, n_printers=3
    )
    doc["thresholds"]["alert_threshold"] = 2.0
    for sig in doc["signatures"]:
        sig["pattern"]["magnitude"] = magnitude
    return doc
