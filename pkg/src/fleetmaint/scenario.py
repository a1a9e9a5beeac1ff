"""Scenario file loading and eager validation.

A scenario is one human-editable YAML document (``schema: 1``) binding
vehicles, signatures, topology, catalog, inventory, staff, thresholds,
the fault model, and the seed into a runnable configuration.  All cross
references are resolved at load time; a dangling id fails fast with a
``ScenarioError`` naming the missing id.

All vehicles must share one sensor id set: the distributed model
snapshot carries a single fleet-wide scaling/classifier, so the feature
space must agree across gateways.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import yaml

from .backend import Depot, PartSpec, Printer, StaffMember, Topology
from .bus import FaultModel
from .errors import ScenarioError
from .lof import LofParams
from .models import LinearClassifier, ModelSnapshot
from .telemetry import (
    DriftPattern,
    FailureSignature,
    Pattern,
    Route,
    SensorSpec,
    SpikePattern,
    VarianceInflationPattern,
    VehicleProfile,
)

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class Thresholds:
    alert_threshold: float = 2.0
    confidence_margin: float = 0.5
    order_threshold: float = 10.0
    logistic_a: float = 2.0
    logistic_s0: float = 2.0
    horizon_ms: int = 3_600_000


@dataclass(frozen=True)
class Costs:
    holding_cost_per_part_day: float = 1.0
    print_cost_per_part: float = 5.0


@dataclass
class Scenario:
    seed: int
    cooldown_ms: int
    thresholds: Thresholds
    lof: LofParams
    fault_model: FaultModel
    model_update_every: int
    label_backfill_delay_ms: int
    service_minutes: int
    costs: Costs
    topology: Topology
    parts: dict[str, PartSpec]
    part_sensor_map: dict[str, dict[str, float]]
    damage_table: dict[str, float]
    depots: list[Depot]
    printers: list[Printer]
    inventory: dict[tuple[str, str], int]  # (part_id, depot_id) -> count
    staff: list[StaffMember]
    profiles: list[VehicleProfile]
    signatures: list[FailureSignature]
    initial_model: ModelSnapshot = field(repr=False, default=None)


def _pattern_from_dict(obj: dict, where: str) -> Pattern:
    kind = obj.get("type")
    if kind == "drift":
        return DriftPattern(float(obj["rate_per_ms"]))
    if kind == "spike":
        return SpikePattern(float(obj["magnitude"]), int(obj.get("every_n", 1)))
    if kind == "variance_inflation":
        return VarianceInflationPattern(float(obj["factor"]))
    raise ScenarioError(f"{where}: unknown pattern type {kind!r}")


def _require(obj: dict, key: str, where: str):
    if key not in obj:
        raise ScenarioError(f"{where}: missing required field {key!r}")
    return obj[key]


def parse_scenario(doc: dict) -> Scenario:
    """Validate a raw scenario dict and resolve every cross reference."""
    if not isinstance(doc, dict):
        raise ScenarioError("scenario document must be a mapping")
    if doc.get("schema") != SCHEMA_VERSION:
        raise ScenarioError(f"unsupported schema {doc.get('schema')!r}, expected {SCHEMA_VERSION}")
    if "seed" not in doc:
        raise ScenarioError("scenario must declare a seed")

    th = doc.get("thresholds", {})
    thresholds = Thresholds(
        alert_threshold=float(th.get("alert_threshold", 2.0)),
        confidence_margin=float(th.get("confidence_margin", 0.5)),
        order_threshold=float(th.get("order_threshold", 10.0)),
        logistic_a=float(th.get("logistic_a", 2.0)),
        logistic_s0=float(th.get("logistic_s0", 2.0)),
        horizon_ms=int(th.get("horizon_ms", 3_600_000)),
    )
    lof_cfg = doc.get("lof", {})
    try:
        lof = LofParams(
            k=int(lof_cfg.get("k", 10)),
            window_size=int(lof_cfg.get("window_size", 256)),
            reach_floor=float(lof_cfg.get("reach_floor", 1e-9)),
        )
        fm = doc.get("fault_model", {})
        fault_model = FaultModel(
            latency_ms=int(fm.get("latency_ms", 0)),
            drop_probability=float(fm.get("drop_probability", 0.0)),
            duplicate_probability=float(fm.get("duplicate_probability", 0.0)),
            max_retries=None if fm.get("max_retries") is None else int(fm["max_retries"]),
            retry_backoff_ms=int(fm.get("retry_backoff_ms", 1000)),
        )
    except ValueError as exc:
        raise ScenarioError(str(exc)) from exc

    cost_cfg = doc.get("costs", {})
    costs = Costs(
        holding_cost_per_part_day=float(cost_cfg.get("holding_cost_per_part_day", 1.0)),
        print_cost_per_part=float(cost_cfg.get("print_cost_per_part", 5.0)),
    )

    locations = list(_require(doc, "locations", "scenario"))
    matrix = _require(doc, "transit_ms", "scenario")
    try:
        topology = Topology.from_matrix(locations, matrix)
    except ValueError as exc:
        raise ScenarioError(f"transit_ms: {exc}") from exc

    parts: dict[str, PartSpec] = {}
    part_sensor_map: dict[str, dict[str, float]] = {}
    for entry in _require(doc, "parts", "scenario"):
        part_id = _require(entry, "part_id", "parts")
        if part_id in parts:
            raise ScenarioError(f"duplicate part_id {part_id!r}")
        parts[part_id] = PartSpec(
            part_id, entry.get("category", "general"), int(entry.get("print_minutes", 60))
        )
        weights = {str(s): float(w) for s, w in entry.get("sensors", {}).items()}
        for sid, w in weights.items():
            if w < 0:
                raise ScenarioError(f"parts[{part_id}]: negative weight for sensor {sid!r}")
        part_sensor_map[part_id] = weights

    damage_table = {str(k): float(v) for k, v in doc.get("damage_table", {}).items()}

    depots, inventory = [], {}
    for entry in doc.get("depots", []):
        depot_id = _require(entry, "depot_id", "depots")
        loc = _require(entry, "location", f"depot {depot_id}")
        if loc not in locations:
            raise ScenarioError(f"depot {depot_id!r} references unknown location {loc!r}")
        depots.append(Depot(depot_id, loc))
        for part_id, count in entry.get("stock", {}).items():
            if part_id not in parts:
                raise ScenarioError(f"depot {depot_id!r} stocks unknown part {part_id!r}")
            inventory[(part_id, depot_id)] = int(count)

    printers = []
    for entry in doc.get("printers", []):
        printer_id = _require(entry, "printer_id", "printers")
        loc = _require(entry, "location", f"printer {printer_id}")
        if loc not in locations:
            raise ScenarioError(f"printer {printer_id!r} references unknown location {loc!r}")
        printers.append(Printer(printer_id, loc))

    staff = []
    for entry in doc.get("staff", []):
        staff_id = _require(entry, "staff_id", "staff")
        loc = _require(entry, "location", f"staff {staff_id}")
        if loc not in locations:
            raise ScenarioError(f"staff {staff_id!r} references unknown location {loc!r}")
        staff.append(
            StaffMember(
                staff_id,
                loc,
                tuple(entry.get("skills", [])),
                int(entry.get("available_from", 0)),
                int(entry.get("available_to", 2**62)),
            )
        )

    profiles: list[VehicleProfile] = []
    sensor_sets: set[frozenset] = set()
    for entry in _require(doc, "vehicles", "scenario"):
        vid = _require(entry, "vehicle_id", "vehicles")
        route_cfg = _require(entry, "route", f"vehicle {vid}")
        for endpoint in ("origin", "destination"):
            if route_cfg[endpoint] not in locations:
                raise ScenarioError(
                    f"vehicle {vid!r} references unknown location {route_cfg[endpoint]!r}"
                )
        sensors = tuple(
            SensorSpec(
                str(s["sensor_id"]),
                str(s.get("unit", "")),
                float(s.get("mean", 0.0)),
                float(s.get("stddev", 1.0)),
            )
            for s in _require(entry, "sensors", f"vehicle {vid}")
        )
        try:
            profile = VehicleProfile(
                vehicle_id=str(vid),
                sensors=sensors,
                route=Route(
                    str(route_cfg["origin"]),
                    str(route_cfg["destination"]),
                    int(route_cfg["departure_ts"]),
                    int(route_cfg["arrival_ts"]),
                ),
                sample_period=int(entry.get("sample_period_ms", 1000)),
            )
        except ValueError as exc:
            raise ScenarioError(f"vehicle {vid!r}: {exc}") from exc
        profiles.append(profile)
        sensor_sets.add(frozenset(profile.sensor_ids))
    if not profiles and doc.get("vehicles") is None:
        raise ScenarioError("scenario must declare vehicles")
    if len(sensor_sets) > 1:
        raise ScenarioError("all vehicles must share one sensor id set")
    if len({p.vehicle_id for p in profiles}) != len(profiles):
        raise ScenarioError("duplicate vehicle_id")
    sensor_ids = sorted(next(iter(sensor_sets))) if sensor_sets else []

    for sid in sensor_ids:
        if not any(sid in weights for weights in part_sensor_map.values()):
            raise ScenarioError(f"sensor {sid!r} is not mapped to any part")

    profiles_by_id = {p.vehicle_id: p for p in profiles}
    signatures: list[FailureSignature] = []
    for entry in doc.get("signatures", []):
        sig_id = _require(entry, "signature_id", "signatures")
        vid = _require(entry, "vehicle_id", f"signature {sig_id}")
        profile = profiles_by_id.get(str(vid))
        if profile is None:
            raise ScenarioError(f"signature {sig_id!r} references unknown vehicle {vid!r}")
        affected = tuple(str(s) for s in _require(entry, "sensors", f"signature {sig_id}"))
        for sid in affected:
            if sid not in profile.sensor_ids:
                raise ScenarioError(f"signature {sig_id!r} references unknown sensor {sid!r}")
        onset = int(_require(entry, "onset_ts", f"signature {sig_id}"))
        if not profile.route.departure_ts <= onset <= profile.route.arrival_ts:
            raise ScenarioError(f"signature {sig_id!r} onset {onset} outside the route interval")
        part_id = str(_require(entry, "part_id", f"signature {sig_id}"))
        if part_id not in parts:
            raise ScenarioError(f"signature {sig_id!r} references unknown part {part_id!r}")
        try:
            pattern = _pattern_from_dict(
                _require(entry, "pattern", f"signature {sig_id}"), f"signature {sig_id}"
            )
            signatures.append(
                FailureSignature(
                    str(sig_id), str(vid), affected, onset, pattern, part_id,
                    str(_require(entry, "label", f"signature {sig_id}")),
                )
            )
        except ValueError as exc:
            raise ScenarioError(f"signature {sig_id!r}: {exc}") from exc

    scaling = {}
    if profiles:
        spec_by_id = {s.sensor_id: s for s in profiles[0].sensors}
        scaling = {
            sid: (spec_by_id[sid].baseline_mean, spec_by_id[sid].baseline_stddev)
            for sid in sensor_ids
        }
    classifier = _classifier_from_config(doc.get("initial_classifier", {}), sensor_ids)
    initial_model = ModelSnapshot(
        version=1,
        scaling=scaling,
        classifier=classifier,
        lof=lof,
        alert_threshold=thresholds.alert_threshold,
        confidence_margin=thresholds.confidence_margin,
    )

    return Scenario(
        seed=int(doc["seed"]),
        cooldown_ms=int(doc.get("cooldown_ms", 60_000)),
        thresholds=thresholds,
        lof=lof,
        fault_model=fault_model,
        model_update_every=int(doc.get("model_update_every", 100)),
        label_backfill_delay_ms=int(doc.get("label_backfill_delay_ms", 60_000)),
        service_minutes=int(doc.get("service_minutes", 60)),
        costs=costs,
        topology=topology,
        parts=parts,
        part_sensor_map=part_sensor_map,
        damage_table=damage_table,
        depots=depots,
        printers=printers,
        inventory=inventory,
        staff=staff,
        profiles=profiles,
        signatures=signatures,
        initial_model=initial_model,
    )


def _classifier_from_config(cfg: dict, sensor_ids: list[str]) -> LinearClassifier:
    weights, biases = {}, {}
    for label, entry in cfg.items():
        per_sensor = entry.get("weights", {})
        for sid in per_sensor:
            if sid not in sensor_ids:
                raise ScenarioError(
                    f"initial_classifier[{label}]: unknown sensor {sid!r}"
                )
        weights[label] = np.array([float(per_sensor.get(sid, 0.0)) for sid in sensor_ids])
        biases[label] = float(entry.get("bias", 0.0))
    return LinearClassifier(weights, biases)


def load_scenario(path) -> Scenario:
    try:
        with open(path) as fh:
            doc = yaml.safe_load(fh)
    except FileNotFoundError as exc:
        raise ScenarioError(f"scenario file not found: {path}") from exc
    except yaml.YAMLError as exc:
        raise ScenarioError(f"scenario parse error in {path}: {exc}") from exc
    return parse_scenario(doc)


def save_scenario(doc: dict, path) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(doc, fh, sort_keys=False)
