"""Backend coordination: impact evaluation, ordering, fulfillment, staffing.

All state lives in a single append-only event store; every materialized
view is a pure left-fold of the log from offset 0, so replaying a
persisted ``events.jsonl`` reproduces the views exactly.  The store has
one writer (the coordination loop); views hand out copies.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any

from .cloud import DiagnosedAnomaly
from .errors import IntegrityError

MS_PER_MINUTE = 60_000


@dataclass(frozen=True)
class ImpactAssessment:
    probability: float
    damage: float
    impact: float
    horizon_ms: int


class Action(Enum):
    ORDER = "order"
    NOTIFY_OPERATOR = "notify_operator"
    LOG = "log"


@dataclass(frozen=True)
class Topology:
    locations: tuple[str, ...]
    transit_ms: dict[frozenset, int]

    def transit(self, a: str, b: str) -> int:
        if a == b:
            return 0
        return self.transit_ms[frozenset((a, b))]

    @classmethod
    def from_matrix(cls, locations: list[str], matrix: list[list[int]]) -> "Topology":
        transit: dict[frozenset, int] = {}
        for i, a in enumerate(locations):
            for j, b in enumerate(locations):
                if matrix[i][j] != matrix[j][i]:
                    raise ValueError("transit matrix must be symmetric")
                if i == j and matrix[i][j] != 0:
                    raise ValueError("transit to self must be 0")
                if matrix[i][j] < 0 or not math.isfinite(matrix[i][j]):
                    raise ValueError("transit times must be finite and non-negative")
                if i < j:
                    transit[frozenset((a, b))] = int(matrix[i][j])
        return cls(tuple(locations), transit)


@dataclass(frozen=True)
class Depot:
    depot_id: str
    location: str


@dataclass(frozen=True)
class Printer:
    printer_id: str
    location: str


@dataclass(frozen=True)
class StaffMember:
    staff_id: str
    location: str
    skills: tuple[str, ...]
    available_from: int
    available_to: int


@dataclass(frozen=True)
class PartSpec:
    part_id: str
    category: str
    print_minutes: int


@dataclass(frozen=True)
class EventRecord:
    offset: int
    ts: int
    kind: str
    payload: dict[str, Any]

    def to_json(self) -> str:
        return json.dumps(
            {"offset": self.offset, "ts": self.ts, "kind": self.kind, "payload": self.payload}
        )

    @classmethod
    def from_json(cls, line: str) -> "EventRecord":
        obj = json.loads(line)
        return cls(obj["offset"], obj["ts"], obj["kind"], obj["payload"])


class Views:
    """Materialized views; every mutation comes through ``apply``."""

    def __init__(self) -> None:
        self.orders: dict[str, dict] = {}
        self.open_orders: set[str] = set()
        self.stock: dict[str, int] = {}  # "part@depot" -> count
        self.printer_queues: dict[str, list[dict]] = {}
        self.notifications: list[dict] = []

    def apply(self, event: EventRecord) -> None:
        kind, p = event.kind, event.payload
        if kind == "stock_init":
            self.stock[f"{p['part_id']}@{p['depot_id']}"] = p["count"]
        elif kind == "stock_decremented":
            key = f"{p['part_id']}@{p['depot_id']}"
            if self.stock.get(key, 0) <= 0:
                raise IntegrityError(f"stock for {key} would go negative at offset {event.offset}")
            self.stock[key] -= 1
        elif kind == "stock_restocked":
            key = f"{p['part_id']}@{p['depot_id']}"
            self.stock[key] = self.stock.get(key, 0) + p["count"]
        elif kind == "print_job_enqueued":
            queue = self.printer_queues.setdefault(p["printer_id"], [])
            if queue and p["start_ts"] < queue[-1]["finish_ts"]:
                raise IntegrityError(
                    f"overlapping print job on {p['printer_id']} at offset {event.offset}"
                )
            queue.append(dict(p))
        elif kind == "order_created":
            self.orders[p["order_id"]] = dict(p, status="Created", plan=None, staff_id=None)
            self.open_orders.add(p["order_id"])
        elif kind == "order_fulfilling":
            order = self.orders[p["order_id"]]
            order["status"] = "Fulfilling"
            order["plan"] = p["plan"]
        elif kind == "order_ready":
            self.orders[p["order_id"]]["status"] = "Ready"
            self.open_orders.discard(p["order_id"])
        elif kind == "order_late":
            self.orders[p["order_id"]]["status"] = "Late"
            self.open_orders.discard(p["order_id"])
        elif kind == "order_manual_review":
            self.orders[p["order_id"]]["status"] = "ManualReview"
            self.open_orders.discard(p["order_id"])
        elif kind == "staff_assigned":
            self.orders[p["order_id"]]["staff_id"] = p["staff_id"]
        elif kind == "order_unstaffed":
            self.orders[p["order_id"]]["unstaffed"] = True
        elif kind == "notification":
            self.notifications.append(dict(p))

    def snapshot(self, name: str) -> Any:
        if name == "orders":
            return {k: dict(v) for k, v in sorted(self.orders.items())}
        if name == "open_orders":
            return sorted(self.open_orders)
        if name == "stock":
            return dict(sorted(self.stock.items()))
        if name == "printer_queues":
            return {k: [dict(j) for j in v] for k, v in sorted(self.printer_queues.items())}
        if name == "notifications":
            return [dict(n) for n in self.notifications]
        raise KeyError(f"unknown view {name!r}")


VIEW_NAMES = ("orders", "open_orders", "stock", "printer_queues", "notifications")


class EventStore:
    """Append-only log with contiguous offsets and live folded views."""

    def __init__(self) -> None:
        self.events: list[EventRecord] = []
        self.views = Views()

    def append(self, ts: int, kind: str, payload: dict) -> int:
        offset = len(self.events)
        event = EventRecord(offset, ts, kind, payload)
        self.events.append(event)
        self.views.apply(event)
        return offset

    def query_view(self, name: str) -> Any:
        return self.views.snapshot(name)

    def to_jsonl(self, path) -> None:
        with open(path, "w") as fh:
            for event in self.events:
                fh.write(event.to_json() + "\n")

    @classmethod
    def replay(cls, events: list[EventRecord]) -> "EventStore":
        store = cls()
        for i, event in enumerate(events):
            if event.offset != i:
                raise IntegrityError(f"offset gap: expected {i}, found {event.offset}")
            store.append(event.ts, event.kind, event.payload)
        return store

    @classmethod
    def load_jsonl(cls, path) -> "EventStore":
        events = []
        with open(path) as fh:
            for line in fh:
                line = line.strip()
                if line:
                    events.append(EventRecord.from_json(line))
        return cls.replay(events)


def logistic(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    z = math.exp(x)
    return z / (1.0 + z)


def evaluate_impact(
    diagnosed: DiagnosedAnomaly,
    horizon_ms: int,
    damage_table: dict[str, float],
    a: float,
    s0: float,
) -> ImpactAssessment:
    """probability = logistic(a * (refined_score - s0)); impact = probability * damage."""
    probability = logistic(a * (diagnosed.refined_score - s0))
    label = diagnosed.severity_label
    damage = damage_table.get(label, 0.0) if label is not None else 0.0
    return ImpactAssessment(probability, damage, probability * damage, horizon_ms)


def decide_action(
    assessment: ImpactAssessment, diagnosed: DiagnosedAnomaly, order_threshold: float
) -> Action:
    if diagnosed.severity_label is None:
        return Action.NOTIFY_OPERATOR
    if assessment.impact >= order_threshold:
        return Action.ORDER
    return Action.LOG


class Coordinator:
    """Sequential order/fulfillment/staffing workflow over the event store."""

    def __init__(
        self,
        store: EventStore,
        topology: Topology,
        depots: list[Depot],
        printers: list[Printer],
        staff: list[StaffMember],
        parts: dict[str, PartSpec],
        service_minutes: int = 60,
    ):
        self.store = store
        self.topology = topology
        self.depots = sorted(depots, key=lambda d: d.depot_id)
        self.printers = sorted(printers, key=lambda p: p.printer_id)
        self.staff = staff
        self.parts = parts
        self.service_minutes = service_minutes
        self._orders_by_key: dict[tuple[str, str, str], str] = {}
        self._order_count = 0
        self._job_count = 0

    def init_stock(self, inventory: dict[tuple[str, str], int], ts: int = 0) -> None:
        for (part_id, depot_id), count in sorted(inventory.items()):
            self.store.append(ts, "stock_init", {"part_id": part_id, "depot_id": depot_id, "count": count})

    def create_order(
        self, diagnosed: DiagnosedAnomaly, destination: str, deadline: int, now: int
    ) -> str:
        """Idempotent per (vehicle, part, episode); returns the order id."""
        key = (diagnosed.report.vehicle_id, diagnosed.suspect_part_id, diagnosed.report.episode_id)
        existing = self._orders_by_key.get(key)
        if existing is not None:
            return existing
        self._order_count += 1
        order_id = f"order-{self._order_count}"
        self._orders_by_key[key] = order_id
        self.store.append(
            now,
            "order_created",
            {
                "order_id": order_id,
                "vehicle_id": diagnosed.report.vehicle_id,
                "part_id": diagnosed.suspect_part_id,
                "episode_id": diagnosed.report.episode_id,
                "destination": destination,
                "deadline": deadline,
            },
        )
        return order_id

    def _queue_end(self, printer_id: str, now: int) -> int:
        queue = self.store.views.printer_queues.get(printer_id, [])
        return max(queue[-1]["finish_ts"], now) if queue else now

    def fulfill_order(self, order_id: str, now: int) -> dict | None:
        """Pick the earliest-ready source (stock vs print) and commit it.

        Returns the plan payload, or None when the order went to manual
        review for lack of any source.
        """
        order = self.store.views.orders[order_id]
        part_id, destination, deadline = order["part_id"], order["destination"], order["deadline"]
        part = self.parts[part_id]

        # candidate = (ready_ts, source_rank, source_id, plan payload)
        candidates: list[tuple[int, int, str, dict]] = []
        for depot in self.depots:
            if self.store.views.stock.get(f"{part_id}@{depot.depot_id}", 0) > 0:
                availability = now
                ready = availability + self.topology.transit(depot.location, destination)
                plan = {
                    "source": "stock",
                    "depot_id": depot.depot_id,
                    "delivery_depart_ts": availability,
                    "ready_ts": ready,
                }
                candidates.append((ready, 0, depot.depot_id, plan))
        for printer in self.printers:
            start = self._queue_end(printer.printer_id, now)
            finish = start + part.print_minutes * MS_PER_MINUTE
            ready = finish + self.topology.transit(printer.location, destination)
            plan = {
                "source": "print",
                "printer_id": printer.printer_id,
                "start_ts": start,
                "finish_ts": finish,
                "delivery_depart_ts": finish,
                "ready_ts": ready,
            }
            candidates.append((ready, 1, printer.printer_id, plan))

        if not candidates:
            self.store.append(now, "order_manual_review", {"order_id": order_id, "reason": "unfulfillable"})
            self.store.append(
                now,
                "notification",
                {"kind": "unfulfillable_order", "order_id": order_id, "part_id": part_id},
            )
            return None

        candidates.sort(key=lambda c: (c[0], c[1], c[2]))
        ready_ts, _, source_id, plan = candidates[0]
        if plan["source"] == "stock":
            self.store.append(
                now, "stock_decremented", {"part_id": part_id, "depot_id": source_id}
            )
        else:
            self._job_count += 1
            plan = dict(plan, job_id=f"job-{self._job_count}", part_id=part_id)
            self.store.append(
                now,
                "print_job_enqueued",
                {
                    "job_id": plan["job_id"],
                    "printer_id": source_id,
                    "part_id": part_id,
                    "start_ts": plan["start_ts"],
                    "finish_ts": plan["finish_ts"],
                },
            )
        self.store.append(
            now,
            "order_fulfilling",
            {"order_id": order_id, "plan": plan, "late_at_plan_time": ready_ts > deadline},
        )
        return plan

    def assign_staff(self, order_id: str, arrival_ts: int, now: int) -> str | None:
        """Earliest-available qualified staff at the destination, or Unstaffed."""
        order = self.store.views.orders[order_id]
        category = self.parts[order["part_id"]].category
        service_end = arrival_ts + self.service_minutes * MS_PER_MINUTE
        candidates = [
            s
            for s in self.staff
            if s.location == order["destination"]
            and category in s.skills
            and s.available_from <= arrival_ts
            and s.available_to >= service_end
        ]
        if not candidates:
            self.store.append(now, "order_unstaffed", {"order_id": order_id})
            self.store.append(
                now, "notification", {"kind": "unstaffed_order", "order_id": order_id}
            )
            return None
        candidates.sort(key=lambda s: (s.available_from, s.staff_id))
        chosen = candidates[0]
        self.store.append(
            now, "staff_assigned", {"order_id": order_id, "staff_id": chosen.staff_id}
        )
        return chosen.staff_id

    def settle_order_at_arrival(self, order_id: str, now: int) -> str:
        """Mark a fulfilling order Ready or Late when the vehicle arrives."""
        order = self.store.views.orders[order_id]
        plan = order.get("plan")
        if plan is not None and plan["ready_ts"] <= order["deadline"]:
            self.store.append(now, "order_ready", {"order_id": order_id})
            return "Ready"
        self.store.append(now, "order_late", {"order_id": order_id})
        return "Late"
