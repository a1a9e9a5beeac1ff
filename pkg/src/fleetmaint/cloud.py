"""Cloud-side analysis: deep re-scoring, part localization, model lifecycle.

The analyzer re-scores each suspicious report against a cross-fleet
reference set (a seeded reservoir sample of standardized normal-looking
points harvested from report context frames), attributes a suspect part
through the part/sensor weight map, and keeps append-only judge records
that drive the retrain/validate/release cycle.  A candidate model is
released only when it strictly beats the incumbent on a deterministic
holdout of the labeled judge records.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np

from .bus import Broker, Envelope
from .errors import CatalogError
from .gateway import AnomalyReport, classify
from .lof import lof_score
from .models import LinearClassifier, ModelSnapshot
from .telemetry import TelemetryFrame, standardize

MODEL_SCHEMA = "model-snapshot/1"
MODEL_TOPIC = "fleet/model"
DEFAULT_RESERVOIR_CAPACITY = 4096
PERCEPTRON_PASSES = 5
HOLDOUT_FRACTION = 0.2


@dataclass(frozen=True)
class DiagnosedAnomaly:
    report: AnomalyReport
    refined_score: float
    suspect_part_id: str
    severity_label: str | None
    diagnosed_ts: int

    def to_payload(self) -> dict:
        return {
            "report_id": self.report.report_id,
            "vehicle_id": self.report.vehicle_id,
            "episode_id": self.report.episode_id,
            "edge_score": self.report.score,
            "refined_score": self.refined_score,
            "suspect_part_id": self.suspect_part_id,
            "severity_label": self.severity_label,
            "diagnosed_ts": self.diagnosed_ts,
        }


@dataclass
class JudgeRecord:
    report_id: str
    predicted_label: str | None
    true_label: str | None
    refined_score: float
    ts: int


class Reservoir:
    """Fixed-capacity uniform reservoir sample with a seeded generator."""

    def __init__(self, capacity: int, rng: np.random.Generator):
        self.capacity = capacity
        self.rng = rng
        self.items: list[np.ndarray] = []
        self._seen = 0

    def add(self, item: np.ndarray) -> None:
        self._seen += 1
        if len(self.items) < self.capacity:
            self.items.append(item)
            return
        slot = int(self.rng.integers(0, self._seen))
        if slot < self.capacity:
            self.items[slot] = item


def localize_part(
    feature_deviations: dict[str, float], part_sensor_map: dict[str, dict[str, float]]
) -> str:
    """Suspect part = argmax of weighted deviation sums; ties go to smallest id."""
    if not part_sensor_map:
        raise CatalogError("part/sensor map is empty")
    best_part = None
    best_sum = -1.0
    for part_id in sorted(part_sensor_map):
        total = sum(
            weight * feature_deviations.get(sensor_id, 0.0)
            for sensor_id, weight in part_sensor_map[part_id].items()
        )
        if total > best_sum:
            best_part, best_sum = part_id, total
    return best_part


def train_averaged_perceptron(
    samples: list[tuple[np.ndarray, str]], passes: int = PERCEPTRON_PASSES
) -> LinearClassifier:
    """Multiclass averaged perceptron over ``samples`` in the given order."""
    labels = sorted({label for _, label in samples})
    if not samples:
        return LinearClassifier()
    dim = samples[0][0].shape[0]
    w = {l: np.zeros(dim) for l in labels}
    b = {l: 0.0 for l in labels}
    acc_w = {l: np.zeros(dim) for l in labels}
    acc_b = {l: 0.0 for l in labels}
    steps = 0
    for _ in range(passes):
        for x, y in samples:
            scores = {l: float(w[l] @ x + b[l]) for l in labels}
            best = max(scores.values())
            pred = min(l for l, s in scores.items() if s == best)
            if pred != y:
                w[y] += x
                b[y] += 1.0
                w[pred] -= x
                b[pred] -= 1.0
            for l in labels:
                acc_w[l] += w[l]
                acc_b[l] += b[l]
            steps += 1
    return LinearClassifier(
        {l: acc_w[l] / steps for l in labels}, {l: acc_b[l] / steps for l in labels}
    )


def holdout_split(labeled: list) -> tuple[list, list]:
    """Deterministic split: last 20% (at least one record) is the holdout."""
    n_holdout = max(1, int(len(labeled) * HOLDOUT_FRACTION))
    return labeled[:-n_holdout], labeled[-n_holdout:]


def _accuracy(classifier: LinearClassifier, samples: list[tuple[np.ndarray, str]]) -> float:
    if not samples:
        return 0.0
    hits = sum(1 for x, y in samples if classifier.predict(x) == y)
    return hits / len(samples)


class CloudAnalyzer:
    """Single logical analyzer consuming bus deliveries sequentially."""

    def __init__(
        self,
        model: ModelSnapshot,
        part_sensor_map: dict[str, dict[str, float]],
        reservoir_rng: np.random.Generator,
        reservoir_capacity: int = DEFAULT_RESERVOIR_CAPACITY,
        raw_store_path=None,
    ):
        self.model = model
        self.part_sensor_map = part_sensor_map
        self.reference = Reservoir(reservoir_capacity, reservoir_rng)
        self.judge_records: list[JudgeRecord] = []
        self.raw_store: dict[str, TelemetryFrame] = {}  # report_id -> gated frame
        self.normal_frames: list[TelemetryFrame] = []  # context frames, for scaling stats
        self.raw_store_path = raw_store_path
        self._raw_file = open(raw_store_path, "w") if raw_store_path else None
        self._records_by_report: dict[str, JudgeRecord] = {}

    def close(self) -> None:
        if self._raw_file:
            self._raw_file.close()
            self._raw_file = None

    def deep_analyze(self, report: AnomalyReport, now: int) -> DiagnosedAnomaly:
        gated = report.gated_frame
        features = standardize(gated, self.model.scaling)
        refined = lof_score(features, self.reference.items, self.model.lof)
        suspect = localize_part(report.feature_deviations, self.part_sensor_map)
        labeled = classify(features, self.model)
        severity = labeled[0] if labeled is not None else None

        diagnosed = DiagnosedAnomaly(report, refined, suspect, severity, now)

        # raw storage + reference maintenance
        self.raw_store[report.report_id] = gated
        for frame in report.raw_frames:
            if self._raw_file:
                self._raw_file.write(frame.to_json() + "\n")
        for frame in report.raw_frames[:-1]:
            self.normal_frames.append(frame)
            self.reference.add(standardize(frame, self.model.scaling))

        record = JudgeRecord(report.report_id, severity, None, refined, now)
        self.judge_records.append(record)
        self._records_by_report[report.report_id] = record
        return diagnosed

    def backfill_label(self, report_id: str, true_label: str) -> bool:
        record = self._records_by_report.get(report_id)
        if record is None or record.true_label is not None:
            return False
        record.true_label = true_label
        return True

    def _recompute_scaling(self) -> dict[str, tuple[float, float]]:
        if len(self.normal_frames) < 2:
            return dict(self.model.scaling)
        by_sensor: dict[str, list[float]] = {}
        for frame in self.normal_frames:
            for sid, value in frame.readings.items():
                by_sensor.setdefault(sid, []).append(value)
        scaling = dict(self.model.scaling)
        for sid, values in by_sensor.items():
            if len(values) >= 2:
                arr = np.asarray(values)
                scaling[sid] = (float(arr.mean()), float(arr.std()))
        return scaling

    def update_model(self) -> ModelSnapshot | None:
        """Retrain on labeled judge records; release iff strictly better on holdout."""
        labeled = [
            r for r in self.judge_records
            if r.true_label is not None and r.report_id in self.raw_store
        ]
        if not labeled:
            return None
        scaling = self._recompute_scaling()
        samples = [
            (standardize(self.raw_store[r.report_id], scaling), r.true_label) for r in labeled
        ]
        train, holdout = holdout_split(samples)
        if not train:
            return None
        candidate = train_averaged_perceptron(train)
        current_holdout = [
            (standardize(self.raw_store[r.report_id], self.model.scaling), r.true_label)
            for r in labeled
        ]
        _, current_hold = holdout_split(current_holdout)
        cand_acc = _accuracy(candidate, holdout)
        curr_acc = _accuracy(self.model.classifier, current_hold)
        if cand_acc <= curr_acc:
            return None
        released = replace(
            self.model,
            version=self.model.version + 1,
            scaling=scaling,
            classifier=candidate,
        )
        self.model = released
        return released

    def distribute_model(self, snapshot: ModelSnapshot, broker: Broker, now: int) -> int:
        envelope = Envelope(
            message_id=f"model-v{snapshot.version}",
            topic=MODEL_TOPIC,
            publish_ts=now,
            schema_tag=MODEL_SCHEMA,
            payload=json.dumps(snapshot.to_payload()).encode("utf-8"),
        )
        return broker.publish(envelope)

    def handle_report_envelope(self, envelope: Envelope, now: int) -> DiagnosedAnomaly:
        report = AnomalyReport.from_json(envelope.payload.decode("utf-8"))
        return self.deep_analyze(report, now)
