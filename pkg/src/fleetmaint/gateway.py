"""Per-vehicle edge gateway: streaming LOF scoring, labeling, gating.

The gateway keeps a ring buffer of recent raw frames as its LOF
reference window (standardized on demand so a newly applied model's
scaling takes effect immediately), scores each incoming frame, and
publishes an anomaly report when the score crosses the alert threshold
outside the cooldown window.  Cooldown groups consecutive alerts into
one episode so each failure maps to at most one maintenance order.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, replace

import numpy as np

from .bus import Envelope
from .lof import lof_score
from .models import ModelSnapshot
from .telemetry import TelemetryFrame, standardize

ANOMALY_SCHEMA = "anomaly-report/1"
DEFAULT_COOLDOWN_MS = 60_000
DEFAULT_CONTEXT_FRAMES = 8


@dataclass(frozen=True)
class GateState:
    cooldown_until: int = 0
    open_episode_id: str | None = None


@dataclass(frozen=True)
class GateDecision:
    kind: str  # "emit" | "suppress" | "pass"
    episode_id: str | None = None


@dataclass(frozen=True)
class AnomalyReport:
    report_id: str
    vehicle_id: str
    episode_id: str
    window: tuple[int, int]  # (first_ts, last_ts)
    score: float
    label: str | None
    confidence: float | None
    feature_deviations: dict[str, float]
    model_version: int
    raw_frames: tuple[TelemetryFrame, ...]  # context frames then the gated frame

    @property
    def gated_frame(self) -> TelemetryFrame:
        return self.raw_frames[-1]

    def to_json(self) -> str:
        return json.dumps(
            {
                "report_id": self.report_id,
                "vehicle_id": self.vehicle_id,
                "episode_id": self.episode_id,
                "window": list(self.window),
                "score": self.score,
                "label": self.label,
                "confidence": self.confidence,
                "feature_deviations": {
                    k: self.feature_deviations[k] for k in sorted(self.feature_deviations)
                },
                "model_version": self.model_version,
                "raw_frames": [
                    {
                        "vehicle_id": f.vehicle_id,
                        "timestamp": f.timestamp,
                        "readings": {k: f.readings[k] for k in sorted(f.readings)},
                    }
                    for f in self.raw_frames
                ],
            }
        )

    @classmethod
    def from_json(cls, line: str) -> "AnomalyReport":
        obj = json.loads(line)
        return cls(
            report_id=obj["report_id"],
            vehicle_id=obj["vehicle_id"],
            episode_id=obj["episode_id"],
            window=tuple(obj["window"]),
            score=obj["score"],
            label=obj["label"],
            confidence=obj["confidence"],
            feature_deviations=dict(obj["feature_deviations"]),
            model_version=obj["model_version"],
            raw_frames=tuple(
                TelemetryFrame(f["vehicle_id"], f["timestamp"], dict(f["readings"]))
                for f in obj["raw_frames"]
            ),
        )


def classify(features: np.ndarray, model: ModelSnapshot) -> tuple[str, float] | None:
    """Argmax label with margin-based abstention; None means Unlabeled.

    Confidence is top score minus runner-up score; a single-label model
    uses 0.0 as the runner-up.  Argmax ties go to the smallest label.
    """
    scores = model.classifier.scores(features)
    if not scores:
        return None
    ordered = sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))
    top_label, top_score = ordered[0]
    runner_up = ordered[1][1] if len(ordered) > 1 else 0.0
    confidence = top_score - runner_up
    if confidence >= model.confidence_margin:
        return top_label, confidence
    return None


def gate(
    score: float,
    report_ts: int,
    model: ModelSnapshot,
    state: GateState,
    cooldown_ms: int,
    next_episode_id: str,
) -> tuple[GateDecision, GateState]:
    if score <= model.alert_threshold:
        return GateDecision("pass"), state
    if report_ts >= state.cooldown_until:
        new_state = GateState(report_ts + cooldown_ms, next_episode_id)
        return GateDecision("emit", next_episode_id), new_state
    return GateDecision("suppress", state.open_episode_id), state


class EdgeGateway:
    """Single-threaded gateway for one vehicle's stream."""

    def __init__(
        self,
        vehicle_id: str,
        model: ModelSnapshot,
        cooldown_ms: int = DEFAULT_COOLDOWN_MS,
        context_frames: int = DEFAULT_CONTEXT_FRAMES,
    ):
        self.vehicle_id = vehicle_id
        self.model = model
        self.cooldown_ms = cooldown_ms
        self.gate_state = GateState()
        self._raw_window: deque[TelemetryFrame] = deque(maxlen=model.lof.window_size)
        self._std_window: list[np.ndarray] = []
        self._std_version = model.version
        self._context: deque[TelemetryFrame] = deque(maxlen=context_frames)
        self._episode_frames: dict[str, list[TelemetryFrame]] = {}
        self._episode_count = 0
        self._report_count = 0
        self._message_count = 0

    def _standardized_window(self) -> list[np.ndarray]:
        if self._std_version != self.model.version or len(self._std_window) != len(self._raw_window):
            self._std_window = [standardize(f, self.model.scaling) for f in self._raw_window]
            self._std_version = self.model.version
        return self._std_window

    def _append_window(self, frame: TelemetryFrame, features: np.ndarray) -> None:
        evicting = len(self._raw_window) == self._raw_window.maxlen
        self._raw_window.append(frame)
        if self._std_version == self.model.version:
            if evicting and self._std_window:
                self._std_window.pop(0)
            self._std_window.append(features)

    def ingest(self, frame: TelemetryFrame) -> list[Envelope]:
        """Score one frame; returns the envelopes to publish (0 or 1)."""
        features = standardize(frame, self.model.scaling)
        window = self._standardized_window()
        score = lof_score(features, window, self.model.lof)

        candidate_episode = f"{self.vehicle_id}-ep{self._episode_count + 1}"
        decision, self.gate_state = gate(
            score, frame.timestamp, self.model, self.gate_state, self.cooldown_ms, candidate_episode
        )

        envelopes: list[Envelope] = []
        if decision.kind == "emit":
            self._episode_count += 1
            labeled = classify(features, self.model)
            label, confidence = labeled if labeled is not None else (None, None)
            window_first_ts = self._raw_window[0].timestamp if self._raw_window else frame.timestamp
            self._report_count += 1
            deviations = {
                sid: abs(float(v)) for sid, v in zip(sorted(frame.readings), features)
            }
            report = AnomalyReport(
                report_id=f"{self.vehicle_id}-r{self._report_count}",
                vehicle_id=self.vehicle_id,
                episode_id=decision.episode_id,
                window=(window_first_ts, frame.timestamp),
                score=score,
                label=label,
                confidence=confidence,
                feature_deviations=deviations,
                model_version=self.model.version,
                raw_frames=tuple(self._context) + (frame,),
            )
            self._episode_frames[decision.episode_id] = [frame]
            self._message_count += 1
            envelopes.append(
                Envelope(
                    message_id=f"{self.vehicle_id}-m{self._message_count}",
                    topic=f"fleet/{self.vehicle_id}/anomaly",
                    publish_ts=frame.timestamp,
                    schema_tag=ANOMALY_SCHEMA,
                    payload=report.to_json().encode("utf-8"),
                )
            )
        elif decision.kind == "suppress":
            if decision.episode_id is not None:
                self._episode_frames.setdefault(decision.episode_id, []).append(frame)

        self._append_window(frame, features)
        self._context.append(frame)
        return envelopes

    def apply_model(self, snapshot: ModelSnapshot) -> bool:
        """Adopt a newer snapshot; stale or equal versions are rejected."""
        if snapshot.version <= self.model.version:
            return False
        self.model = snapshot
        # raw window survives; it is re-standardized lazily with new scaling
        if self._raw_window.maxlen != snapshot.lof.window_size:
            self._raw_window = deque(self._raw_window, maxlen=snapshot.lof.window_size)
        return True

    def handle_model_envelope(self, _client_id: str, envelope: Envelope) -> None:
        snapshot = ModelSnapshot.from_payload(json.loads(envelope.payload.decode("utf-8")))
        self.apply_model(snapshot)

    def episode_frames(self, episode_id: str) -> list[TelemetryFrame]:
        return list(self._episode_frames.get(episode_id, []))
