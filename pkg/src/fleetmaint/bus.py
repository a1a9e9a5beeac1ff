"""In-process MQTT-subset publish/subscribe broker with a seeded fault model.

Semantics are an MQTT QoS-1 analog: at-least-once delivery with
subscriber-side dedup on message id, so handlers fire at most once per
message.  Delivery is driven by an explicit `deliver(until)` call so the
simulation clock stays in charge; attempts are processed in
deterministic (scheduled time, publish order) order and all randomness
comes from one seeded generator.

Wildcards: `+` matches exactly one topic level, `#` (final segment only)
matches all remaining levels.
"""

from __future__ import annotations

import base64
import heapq
import json
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DuplicateMessageError, InvalidFilterError

Handler = Callable[[str, "Envelope"], None]


@dataclass(frozen=True)
class Envelope:
    message_id: str
    topic: str
    publish_ts: int
    schema_tag: str
    payload: bytes
    attempt: int = 1

    def to_json(self) -> str:
        return json.dumps(
            {
                "id": self.message_id,
                "topic": self.topic,
                "ts": self.publish_ts,
                "schema": self.schema_tag,
                "attempt": self.attempt,
                "payload": base64.b64encode(self.payload).decode("ascii"),
            }
        )

    @classmethod
    def from_json(cls, line: str) -> "Envelope":
        obj = json.loads(line)
        return cls(
            message_id=obj["id"],
            topic=obj["topic"],
            publish_ts=obj["ts"],
            schema_tag=obj["schema"],
            payload=base64.b64decode(obj["payload"]),
            attempt=obj["attempt"],
        )


@dataclass(frozen=True)
class FaultModel:
    latency_ms: int = 0
    drop_probability: float = 0.0
    duplicate_probability: float = 0.0
    max_retries: int | None = 3  # None = retry forever
    retry_backoff_ms: int = 1000

    def __post_init__(self) -> None:
        if self.latency_ms < 0:
            raise ValueError("latency_ms must be >= 0")
        if not 0.0 <= self.drop_probability < 1.0:
            raise ValueError("drop_probability must be in [0, 1)")
        if not 0.0 <= self.duplicate_probability < 1.0:
            raise ValueError("duplicate_probability must be in [0, 1)")
        if self.max_retries is not None and self.max_retries < 0:
            raise ValueError("max_retries must be >= 0 or None")
        if self.retry_backoff_ms <= 0:
            raise ValueError("retry_backoff_ms must be > 0")


def validate_topic(topic: str) -> list[str]:
    segments = topic.split("/")
    if any(seg == "" for seg in segments):
        raise InvalidFilterError(f"empty segment in topic {topic!r}")
    if any(seg in ("+", "#") for seg in segments):
        raise InvalidFilterError(f"wildcard in concrete topic {topic!r}")
    return segments


def validate_filter(topic_filter: str) -> list[str]:
    segments = topic_filter.split("/")
    if any(seg == "" for seg in segments):
        raise InvalidFilterError(f"empty segment in filter {topic_filter!r}")
    if "#" in segments[:-1]:
        raise InvalidFilterError(f"'#' not in final position in {topic_filter!r}")
    return segments


def topic_matches(topic_filter: str, topic: str) -> bool:
    """True iff ``topic`` matches ``topic_filter`` under MQTT wildcard rules."""
    fsegs = validate_filter(topic_filter)
    tsegs = topic.split("/")
    for i, fseg in enumerate(fsegs):
        if fseg == "#":
            return True
        if i >= len(tsegs):
            return False
        if fseg != "+" and fseg != tsegs[i]:
            return False
    return len(fsegs) == len(tsegs)


@dataclass
class Subscription:
    client_id: str
    topic_filter: str
    handler: Handler
    seen_ids: set[str] = field(default_factory=set)


@dataclass(frozen=True)
class DeadLetter:
    client_id: str
    envelope: Envelope
    attempts: int
    ts: int


class Broker:
    """Single logical owner of all queues; publish/deliver are serialized."""

    def __init__(self, fault_model: FaultModel | None = None, rng: np.random.Generator | None = None):
        self.fault_model = fault_model or FaultModel()
        self.rng = rng or np.random.default_rng(0)
        self.subscriptions: list[Subscription] = []
        self.dead_letters: list[DeadLetter] = []
        self.log: list[Envelope] = []
        self._published_ids: set[str] = set()
        self._pending: list[tuple[int, int, int, Envelope]] = []  # (ts, seq, sub_idx, env)
        self._seq = 0
        self._delivering = False
        self._staged: list[Envelope] = []

    def subscribe(self, client_id: str, topic_filter: str, handler: Handler) -> Subscription:
        validate_filter(topic_filter)
        sub = Subscription(client_id, topic_filter, handler)
        self.subscriptions.append(sub)
        return sub

    def publish(self, envelope: Envelope) -> int:
        """Fan the envelope out to matching subscriptions; returns enqueue count."""
        validate_topic(envelope.topic)
        if envelope.message_id in self._published_ids:
            raise DuplicateMessageError(f"message_id {envelope.message_id!r} already published")
        self._published_ids.add(envelope.message_id)
        self.log.append(envelope)
        if self._delivering:
            # re-entrant publish from a handler; schedule on the next round
            self._staged.append(envelope)
            return sum(
                topic_matches(sub.topic_filter, envelope.topic) for sub in self.subscriptions
            )
        return self._schedule(envelope)

    def _schedule(self, envelope: Envelope) -> int:
        count = 0
        deliver_ts = envelope.publish_ts + self.fault_model.latency_ms
        for idx, sub in enumerate(self.subscriptions):
            if topic_matches(sub.topic_filter, envelope.topic):
                heapq.heappush(self._pending, (deliver_ts, self._seq, idx, envelope))
                self._seq += 1
                count += 1
        return count

    def deliver(self, until: int) -> list[tuple[str, Envelope]]:
        """Attempt every delivery scheduled at or before ``until``.

        Returns the (client_id, envelope) pairs whose handlers fired.
        Handlers may publish; those messages wait for the next round.
        """
        fm = self.fault_model
        delivered: list[tuple[str, Envelope]] = []
        self._delivering = True
        try:
            while self._pending and self._pending[0][0] <= until:
                ts, _, sub_idx, env = heapq.heappop(self._pending)
                sub = self.subscriptions[sub_idx]
                if fm.drop_probability > 0 and self.rng.random() < fm.drop_probability:
                    if fm.max_retries is None or env.attempt <= fm.max_retries:
                        retry = Envelope(
                            env.message_id, env.topic, env.publish_ts,
                            env.schema_tag, env.payload, env.attempt + 1,
                        )
                        heapq.heappush(
                            self._pending, (ts + fm.retry_backoff_ms, self._seq, sub_idx, retry)
                        )
                        self._seq += 1
                    else:
                        self.dead_letters.append(DeadLetter(sub.client_id, env, env.attempt, ts))
                    continue
                copies = 1
                if fm.duplicate_probability > 0 and self.rng.random() < fm.duplicate_probability:
                    copies = 2
                for _ in range(copies):
                    if env.message_id in sub.seen_ids:
                        continue
                    sub.seen_ids.add(env.message_id)
                    sub.handler(sub.client_id, env)
                    delivered.append((sub.client_id, env))
        finally:
            self._delivering = False
        staged, self._staged = self._staged, []
        for env in staged:
            self._schedule(env)
        return delivered

    @property
    def pending_count(self) -> int:
        return len(self._pending) + len(self._staged)
