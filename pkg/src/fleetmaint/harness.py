"""End-to-end orchestration: discrete-event loop, metrics, baseline pairing.

One run wires the telemetry generators, per-vehicle gateways, broker,
cloud analyzer, and backend coordinator together on a single integer
millisecond timeline.  Every observable step is appended to the event
store, which doubles as the run's JSON-lines log; metrics are computed
purely from that log plus the ground truth embedded in the run_start
event, so `replay` and `report` work from the log alone.

Seeding: stream i of vehicle telemetry uses SeedSequence([seed, 1, i]),
the bus fault model uses [seed, 2], the cloud reservoir [seed, 3].
"""

from __future__ import annotations

import heapq
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .backend import (
    Action,
    Coordinator,
    EventStore,
    decide_action,
    evaluate_impact,
)
from .bus import Broker, Envelope
from .cloud import CloudAnalyzer
from .errors import IntegrityError
from .gateway import AnomalyReport, EdgeGateway
from .models import ModelSnapshot
from .scenario import Scenario
from .telemetry import generate_frame

MS_PER_DAY = 86_400_000
MODE_PLATFORM = "platform"
MODE_BASELINE = "baseline"


@dataclass
class SimulationReport:
    mode: str
    detection: dict[str, dict]
    precision: float | None
    recall: float | None
    readiness_rate: float | None
    delayed_service_rate: float | None
    stock_cost: float
    print_cost: float
    event_log_path: str | None = None

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "detection": self.detection,
            "precision": self.precision,
            "recall": self.recall,
            "readiness_rate": self.readiness_rate,
            "delayed_service_rate": self.delayed_service_rate,
            "stock_cost": self.stock_cost,
            "print_cost": self.print_cost,
            "event_log_path": self.event_log_path,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _telemetry_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, 1, index]))


def _bus_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, 2]))


def _reservoir_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, 3]))


class _Run:
    def __init__(self, scenario: Scenario, mode: str, out_dir: Path | None):
        self.scenario = scenario
        self.mode = mode
        self.out_dir = out_dir
        self.store = EventStore()
        self.broker = Broker(scenario.fault_model, _bus_rng(scenario.seed))
        raw_path = out_dir / "raw_frames.jsonl" if out_dir else None
        self.analyzer = CloudAnalyzer(
            scenario.initial_model,
            scenario.part_sensor_map,
            _reservoir_rng(scenario.seed),
            raw_store_path=raw_path,
        )
        self.coordinator = Coordinator(
            self.store,
            scenario.topology,
            scenario.depots,
            scenario.printers,
            scenario.staff,
            scenario.parts,
            scenario.service_minutes,
        )
        self.profiles = scenario.profiles
        self.profile_by_id = {p.vehicle_id: p for p in self.profiles}
        self.rngs = [_telemetry_rng(scenario.seed, i) for i in range(len(self.profiles))]
        self.gateways = {
            p.vehicle_id: EdgeGateway(p.vehicle_id, scenario.initial_model, scenario.cooldown_ms)
            for p in self.profiles
        }
        self.cloud_inbox: list[Envelope] = []
        self.backfills: list[tuple[int, int, str, str]] = []  # (due, seq, report_id, label)
        self._backfill_seq = 0
        self._labels_since_update = 0
        self._dead_letters_logged = 0
        self._vendor_seq = 0

    # -- wiring -----------------------------------------------------------

    def _subscribe_all(self) -> None:
        self.broker.subscribe(
            "cloud", "fleet/+/anomaly", lambda _c, env: self.cloud_inbox.append(env)
        )
        for vid, gw in self.gateways.items():
            self.broker.subscribe(f"gw-{vid}", "fleet/model", self._model_handler(gw))

    def _model_handler(self, gw: EdgeGateway):
        def handler(client_id: str, envelope: Envelope) -> None:
            snapshot = ModelSnapshot.from_payload(json.loads(envelope.payload.decode("utf-8")))
            applied = gw.apply_model(snapshot)
            self.store.append(
                envelope.publish_ts,
                "model_applied",
                {"client_id": client_id, "version": snapshot.version, "applied": applied},
            )

        return handler

    # -- per-tick steps ----------------------------------------------------

    def _emit_frames(self, t: int) -> None:
        for i, profile in enumerate(self.profiles):
            route = profile.route
            if t < route.departure_ts or t > route.arrival_ts:
                continue
            if (t - route.departure_ts) % profile.sample_period != 0:
                continue
            frame = generate_frame(profile, t, self.rngs[i], self.scenario.signatures)
            if self.mode != MODE_PLATFORM:
                continue
            for envelope in self.gateways[profile.vehicle_id].ingest(frame):
                report = AnomalyReport.from_json(envelope.payload.decode("utf-8"))
                self.store.append(
                    t,
                    "anomaly_report",
                    {
                        "report_id": report.report_id,
                        "vehicle_id": report.vehicle_id,
                        "episode_id": report.episode_id,
                        "window": list(report.window),
                        "score": report.score,
                        "label": report.label,
                        "model_version": report.model_version,
                    },
                )
                self.broker.publish(envelope)

    def _log_dead_letters(self, t: int) -> None:
        for dl in self.broker.dead_letters[self._dead_letters_logged:]:
            self.store.append(
                t,
                "dead_letter",
                {
                    "client_id": dl.client_id,
                    "message_id": dl.envelope.message_id,
                    "topic": dl.envelope.topic,
                    "attempts": dl.attempts,
                },
            )
            self._dead_letters_logged += 1

    def _ground_truth_label(self, report: AnomalyReport) -> str:
        profile = self.profile_by_id[report.vehicle_id]
        first_ts, last_ts = report.window
        for sig in self.scenario.signatures:
            if sig.vehicle_id != report.vehicle_id:
                continue
            if first_ts <= profile.route.arrival_ts and last_ts >= sig.onset_ts:
                return sig.true_label
        return "normal"

    def _process_cloud_inbox(self, t: int) -> None:
        inbox, self.cloud_inbox = self.cloud_inbox, []
        for envelope in inbox:
            diagnosed = self.analyzer.handle_report_envelope(envelope, t)
            self.store.append(t, "diagnosed", diagnosed.to_payload())
            self._backfill_seq += 1
            self.backfills.append(
                (
                    t + self.scenario.label_backfill_delay_ms,
                    self._backfill_seq,
                    diagnosed.report.report_id,
                    self._ground_truth_label(diagnosed.report),
                )
            )
            self._coordinate(diagnosed, t)

    def _coordinate(self, diagnosed, t: int) -> None:
        th = self.scenario.thresholds
        assessment = evaluate_impact(
            diagnosed, th.horizon_ms, self.scenario.damage_table, th.logistic_a, th.logistic_s0
        )
        self.store.append(
            t,
            "impact",
            {
                "report_id": diagnosed.report.report_id,
                "probability": assessment.probability,
                "damage": assessment.damage,
                "impact": assessment.impact,
                "horizon_ms": assessment.horizon_ms,
            },
        )
        action = decide_action(assessment, diagnosed, th.order_threshold)
        self.store.append(
            t, "action", {"report_id": diagnosed.report.report_id, "action": action.value}
        )
        if action is Action.NOTIFY_OPERATOR:
            self.store.append(
                t,
                "notification",
                {"kind": "manual_analysis", "report_id": diagnosed.report.report_id},
            )
            return
        if action is not Action.ORDER:
            return

        profile = self.profile_by_id[diagnosed.report.vehicle_id]
        destination = profile.route.destination
        deadline = profile.route.arrival_ts
        order_id = self.coordinator.create_order(diagnosed, destination, deadline, t)
        order = self.store.views.orders[order_id]
        if order["status"] != "Created":
            return  # duplicate episode order; already planned
        plan = self.coordinator.fulfill_order(order_id, t)
        if plan is not None and plan["source"] == "print":
            self._vendor_seq += 1
            self.broker.publish(
                Envelope(
                    message_id=f"vendor-{self._vendor_seq}",
                    topic=f"vendor/print/{plan['printer_id']}",
                    publish_ts=t,
                    schema_tag="print-job/1",
                    payload=json.dumps(
                        {"job_id": plan["job_id"], "part_id": plan["part_id"]}
                    ).encode("utf-8"),
                )
            )
        if plan is not None:
            self.coordinator.assign_staff(order_id, deadline, t)
        if t > deadline:
            # report arrived after the vehicle; settle immediately
            self.coordinator.settle_order_at_arrival(order_id, t)

    def _process_backfills(self, t: int) -> None:
        due = [b for b in self.backfills if b[0] <= t]
        if not due:
            return
        self.backfills = [b for b in self.backfills if b[0] > t]
        for _, _, report_id, label in sorted(due):
            if self.analyzer.backfill_label(report_id, label):
                self.store.append(
                    t, "judge_label", {"report_id": report_id, "true_label": label}
                )
                self._labels_since_update += 1
        if self._labels_since_update >= self.scenario.model_update_every:
            self._labels_since_update = 0
            released = self.analyzer.update_model()
            if released is not None:
                self.store.append(t, "model_released", {"version": released.version})
                self.analyzer.distribute_model(released, self.broker, t)

    def _handle_arrivals(self, t: int) -> None:
        for profile in self.profiles:
            if profile.route.arrival_ts != t:
                continue
            vid = profile.vehicle_id
            for order_id in sorted(self.store.views.open_orders):
                order = self.store.views.orders[order_id]
                if order["vehicle_id"] == vid and order["status"] in ("Created", "Fulfilling"):
                    self.coordinator.settle_order_at_arrival(order_id, t)
            has_failure = any(s.vehicle_id == vid for s in self.scenario.signatures)
            ready = any(
                o["vehicle_id"] == vid and o["status"] == "Ready"
                for o in self.store.views.orders.values()
            )
            delayed = has_failure and not ready
            self.store.append(
                t,
                "arrival",
                {
                    "vehicle_id": vid,
                    "has_true_failure": has_failure,
                    "ready_order": ready,
                    "delayed": delayed,
                },
            )
            if ready:
                self.store.append(t, "maintenance", {"vehicle_id": vid})

    # -- main loop ----------------------------------------------------------

    def execute(self) -> EventStore:
        sc = self.scenario
        self.store.append(
            0,
            "run_start",
            {
                "schema": 1,
                "seed": sc.seed,
                "mode": self.mode,
                "costs": {
                    "holding_cost_per_part_day": sc.costs.holding_cost_per_part_day,
                    "print_cost_per_part": sc.costs.print_cost_per_part,
                },
                "vehicles": [
                    {
                        "vehicle_id": p.vehicle_id,
                        "departure_ts": p.route.departure_ts,
                        "arrival_ts": p.route.arrival_ts,
                        "destination": p.route.destination,
                    }
                    for p in self.profiles
                ],
                "signatures": [
                    {
                        "signature_id": s.signature_id,
                        "vehicle_id": s.vehicle_id,
                        "onset_ts": s.onset_ts,
                        "part_id": s.true_part_id,
                        "label": s.true_label,
                    }
                    for s in sc.signatures
                ],
            },
        )
        self.coordinator.init_stock(sc.inventory, ts=0)
        self._subscribe_all()

        ticks: set[int] = set()
        for p in self.profiles:
            ticks.update(p.sample_times())
            ticks.add(p.route.arrival_ts)

        last_t = 0
        for t in sorted(ticks):
            last_t = t
            self._emit_frames(t)
            self.broker.deliver(t)
            self._log_dead_letters(t)
            self._process_cloud_inbox(t)
            self._process_backfills(t)
            self._handle_arrivals(t)

        # drain retries and in-flight deliveries so nothing is silently lost
        step = max(sc.fault_model.retry_backoff_ms, sc.fault_model.latency_ms, 1)
        while self.broker.pending_count or self.cloud_inbox or self.backfills:
            last_t += step
            self.broker.deliver(last_t)
            self._log_dead_letters(last_t)
            self._process_cloud_inbox(last_t)
            self._process_backfills(last_t)

        self.store.append(last_t, "run_end", {"final_ts": last_t})
        self.analyzer.close()
        return self.store


def run(
    scenario: Scenario,
    mode: str = MODE_PLATFORM,
    out_dir=None,
    deterministic: bool = True,
) -> tuple[SimulationReport, EventStore]:
    """Run one scenario; returns the metrics report and the event store."""
    out_path = Path(out_dir) if out_dir else None
    if out_path:
        out_path.mkdir(parents=True, exist_ok=True)
    store = _Run(scenario, mode, out_path).execute()
    log_path = None
    if out_path:
        log_path = out_path / "events.jsonl"
        store.to_jsonl(log_path)
    report = compute_metrics(store.events, str(log_path) if log_path else None)
    if out_path:
        (out_path / "report.json").write_text(report.to_json() + "\n")
    return report, store


def compute_metrics(events, event_log_path: str | None = None) -> SimulationReport:
    """Fold a complete event log into a SimulationReport.

    An episode matches a signature iff its report window overlaps
    [onset_ts, arrival_ts] on the same vehicle.  Metrics with an empty
    denominator are reported as None, never 0.
    """
    if not events or events[0].kind != "run_start":
        raise IntegrityError("log does not begin with run_start")
    if events[-1].kind != "run_end":
        raise IntegrityError("log is truncated: no run_end event")
    start = events[0].payload
    signatures = start["signatures"]
    arrivals_by_vehicle = {v["vehicle_id"]: v["arrival_ts"] for v in start["vehicles"]}

    episodes: list[dict] = []
    orders_created = orders_ready = 0
    print_jobs = 0
    stock_units = 0
    arrivals = delayed = 0
    for ev in events:
        if ev.kind == "anomaly_report":
            episodes.append(ev.payload)
        elif ev.kind == "order_created":
            orders_created += 1
        elif ev.kind == "order_ready":
            orders_ready += 1
        elif ev.kind == "print_job_enqueued":
            print_jobs += 1
        elif ev.kind == "stock_init":
            stock_units += ev.payload["count"]
        elif ev.kind == "arrival":
            arrivals += 1
            delayed += bool(ev.payload["delayed"])

    def matches(episode: dict, sig: dict) -> bool:
        if episode["vehicle_id"] != sig["vehicle_id"]:
            return False
        first_ts, last_ts = episode["window"]
        arrival = arrivals_by_vehicle[sig["vehicle_id"]]
        return first_ts <= arrival and last_ts >= sig["onset_ts"]

    detection: dict[str, dict] = {}
    detected = 0
    for sig in signatures:
        hits = [e for e in episodes if matches(e, sig)]
        if hits:
            detected += 1
            latency = min(e["window"][1] for e in hits) - sig["onset_ts"]
            detection[sig["signature_id"]] = {"detected": True, "latency_ms": latency}
        else:
            detection[sig["signature_id"]] = {"detected": False, "latency_ms": None}
    matched_episodes = sum(
        1 for e in episodes if any(matches(e, sig) for sig in signatures)
    )

    precision = matched_episodes / len(episodes) if episodes else None
    recall = detected / len(signatures) if signatures else None
    readiness = orders_ready / orders_created if orders_created else None
    delayed_rate = delayed / arrivals if arrivals else None

    duration_days = (events[-1].ts - events[0].ts) / MS_PER_DAY
    costs = start["costs"]
    stock_cost = stock_units * costs["holding_cost_per_part_day"] * duration_days
    print_cost = print_jobs * costs["print_cost_per_part"]

    return SimulationReport(
        mode=start["mode"],
        detection=detection,
        precision=precision,
        recall=recall,
        readiness_rate=readiness,
        delayed_service_rate=delayed_rate,
        stock_cost=stock_cost,
        print_cost=print_cost,
        event_log_path=event_log_path,
    )


def compare_baseline(scenario: Scenario, out_dir=None) -> tuple[SimulationReport, SimulationReport]:
    """Run the same seeded scenario with the platform on, then in
    arrival-discovery baseline mode; returns (platform, baseline) reports."""
    platform_dir = Path(out_dir) / "platform" if out_dir else None
    baseline_dir = Path(out_dir) / "baseline" if out_dir else None
    platform_report, _ = run(scenario, MODE_PLATFORM, platform_dir)
    baseline_report, _ = run(scenario, MODE_BASELINE, baseline_dir)
    return platform_report, baseline_report
