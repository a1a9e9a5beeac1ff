"""Versioned model snapshots distributed cloud -> edge.

A snapshot bundles scaling stats, a multiclass linear classifier with
margin-based abstention, LOF parameters, and the gating thresholds.
Snapshots are serialized to JSON for transport on the `fleet/model`
topic; field order is fixed so logs are byte-stable.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import SchemaMismatchError
from .lof import LofParams


@dataclass(frozen=True)
class LinearClassifier:
    """Per-label weight vector + bias over the standardized feature space."""

    weights: dict[str, np.ndarray] = field(default_factory=dict)
    biases: dict[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        dims = {w.shape for w in self.weights.values()}
        if len(dims) > 1:
            raise ValueError(f"weight vectors disagree on dimensionality: {dims}")
        if set(self.weights) != set(self.biases):
            raise ValueError("weights and biases must cover the same labels")

    @property
    def labels(self) -> list[str]:
        return sorted(self.weights)

    def scores(self, features: np.ndarray) -> dict[str, float]:
        out = {}
        for label in self.labels:
            w = self.weights[label]
            if w.shape != features.shape:
                raise SchemaMismatchError(
                    f"classifier dimension {w.shape} != features {features.shape}"
                )
            out[label] = float(w @ features + self.biases[label])
        return out

    def predict(self, features: np.ndarray) -> str | None:
        """Raw argmax label (no abstention); ties go to the smallest label."""
        scores = self.scores(features)
        if not scores:
            return None
        best = max(scores.values())
        return min(l for l, s in scores.items() if s == best)

    def to_payload(self) -> dict:
        return {
            label: {"weights": [float(x) for x in self.weights[label]], "bias": self.biases[label]}
            for label in self.labels
        }

    @classmethod
    def from_payload(cls, obj: dict) -> "LinearClassifier":
        weights = {label: np.array(entry["weights"], dtype=float) for label, entry in obj.items()}
        biases = {label: float(entry["bias"]) for label, entry in obj.items()}
        return cls(weights, biases)


@dataclass(frozen=True)
class ModelSnapshot:
    version: int
    scaling: dict[str, tuple[float, float]]
    classifier: LinearClassifier
    lof: LofParams
    alert_threshold: float
    confidence_margin: float

    def __post_init__(self) -> None:
        if self.version < 1:
            raise ValueError("version must be >= 1")
        if self.confidence_margin < 0:
            raise ValueError("confidence_margin must be >= 0")
        dim = len(self.scaling)
        for label, w in self.classifier.weights.items():
            if w.shape[0] != dim:
                raise ValueError(
                    f"classifier weights for {label!r} have dim {w.shape[0]}, expected {dim}"
                )

    @property
    def feature_order(self) -> list[str]:
        return sorted(self.scaling)

    def to_payload(self) -> dict:
        return {
            "version": self.version,
            "scaling": {sid: [m, s] for sid, (m, s) in sorted(self.scaling.items())},
            "classifier": self.classifier.to_payload(),
            "lof": self.lof.to_payload(),
            "alert_threshold": self.alert_threshold,
            "confidence_margin": self.confidence_margin,
        }

    @classmethod
    def from_payload(cls, obj: dict) -> "ModelSnapshot":
        return cls(
            version=int(obj["version"]),
            scaling={sid: (float(m), float(s)) for sid, (m, s) in obj["scaling"].items()},
            classifier=LinearClassifier.from_payload(obj["classifier"]),
            lof=LofParams.from_payload(obj["lof"]),
            alert_threshold=float(obj["alert_threshold"]),
            confidence_margin=float(obj["confidence_margin"]),
        )
