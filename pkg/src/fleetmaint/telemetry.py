"""Sensor data model and seeded synthetic telemetry generation.

Noise is independent Gaussian per sensor drawn from a numpy
``Generator`` (PCG64).  The generator draws exactly one standard normal
per sensor per frame, in profile sensor order, regardless of which
failure signatures are active, so pre-onset frame sequences are
byte-identical to signature-free runs under the same seed.

Simulated time is integer milliseconds from epoch 0.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import OutOfRouteError, SchemaMismatchError


@dataclass(frozen=True)
class SensorSpec:
    sensor_id: str
    unit: str
    baseline_mean: float
    baseline_stddev: float

    def __post_init__(self) -> None:
        if self.baseline_stddev < 0:
            raise ValueError(f"baseline_stddev < 0 for sensor {self.sensor_id!r}")


@dataclass(frozen=True)
class Route:
    origin: str
    destination: str
    departure_ts: int
    arrival_ts: int

    def __post_init__(self) -> None:
        if self.departure_ts >= self.arrival_ts:
            raise ValueError("departure_ts must precede arrival_ts")


@dataclass(frozen=True)
class VehicleProfile:
    vehicle_id: str
    sensors: tuple[SensorSpec, ...]
    route: Route
    sample_period: int

    def __post_init__(self) -> None:
        if not self.sensors:
            raise ValueError(f"vehicle {self.vehicle_id!r} has no sensors")
        if self.sample_period <= 0:
            raise ValueError("sample_period must be > 0")
        ids = [s.sensor_id for s in self.sensors]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate sensor_id in vehicle {self.vehicle_id!r}")

    @property
    def sensor_ids(self) -> tuple[str, ...]:
        return tuple(s.sensor_id for s in self.sensors)

    def sample_times(self) -> range:
        """All frame timestamps on this route, departure inclusive."""
        return range(self.route.departure_ts, self.route.arrival_ts + 1, self.sample_period)


@dataclass(frozen=True)
class TelemetryFrame:
    vehicle_id: str
    timestamp: int
    readings: dict[str, float]

    def to_json(self) -> str:
        """One-line JSON with fixed field order; readings sorted by sensor id."""
        return json.dumps(
            {
                "vehicle_id": self.vehicle_id,
                "timestamp": self.timestamp,
                "readings": {k: self.readings[k] for k in sorted(self.readings)},
            }
        )

    @classmethod
    def from_json(cls, line: str) -> "TelemetryFrame":
        obj = json.loads(line)
        return cls(obj["vehicle_id"], obj["timestamp"], dict(obj["readings"]))


@dataclass(frozen=True)
class DriftPattern:
    rate_per_ms: float


@dataclass(frozen=True)
class SpikePattern:
    magnitude: float
    every_n: int = 1


@dataclass(frozen=True)
class VarianceInflationPattern:
    factor: float


Pattern = Union[DriftPattern, SpikePattern, VarianceInflationPattern]


@dataclass(frozen=True)
class FailureSignature:
    signature_id: str
    vehicle_id: str
    affected_sensors: tuple[str, ...]
    onset_ts: int
    pattern: Pattern
    true_part_id: str
    true_label: str

    def __post_init__(self) -> None:
        if not self.affected_sensors:
            raise ValueError("affected_sensors must be non-empty")
        for value in _pattern_values(self.pattern):
            if not math.isfinite(value):
                raise ValueError(f"non-finite pattern parameter in {self.signature_id!r}")


def _pattern_values(pattern: Pattern) -> tuple[float, ...]:
    if isinstance(pattern, DriftPattern):
        return (pattern.rate_per_ms,)
    if isinstance(pattern, SpikePattern):
        return (pattern.magnitude, float(pattern.every_n))
    return (pattern.factor,)


def _distort(value: float, mean: float, sig: FailureSignature, t: int, period: int) -> float:
    pattern = sig.pattern
    if isinstance(pattern, DriftPattern):
        return value + pattern.rate_per_ms * (t - sig.onset_ts)
    if isinstance(pattern, SpikePattern):
        samples_since_onset = (t - sig.onset_ts) // period
        if samples_since_onset % pattern.every_n == 0:
            return value + pattern.magnitude
        return value
    # variance inflation scales the deviation from baseline
    return mean + (value - mean) * pattern.factor


def generate_frame(
    profile: VehicleProfile,
    t: int,
    gen_state: np.random.Generator,
    active_signatures: list[FailureSignature],
) -> TelemetryFrame:
    """Draw one frame at time ``t``, applying post-onset signature distortion.

    Consumes one standard normal from ``gen_state`` per sensor whether or
    not any signature is active.
    """
    route = profile.route
    if t < route.departure_ts or t > route.arrival_ts:
        raise OutOfRouteError(
            f"t={t} outside route [{route.departure_ts}, {route.arrival_ts}] "
            f"of vehicle {profile.vehicle_id!r}"
        )
    if (t - route.departure_ts) % profile.sample_period != 0:
        raise ValueError(f"t={t} is not aligned to sample_period {profile.sample_period}")

    readings: dict[str, float] = {}
    for spec in profile.sensors:
        noise = gen_state.standard_normal()
        value = spec.baseline_mean + spec.baseline_stddev * noise
        for sig in active_signatures:
            if (
                sig.vehicle_id == profile.vehicle_id
                and t >= sig.onset_ts
                and spec.sensor_id in sig.affected_sensors
            ):
                value = _distort(value, spec.baseline_mean, sig, t, profile.sample_period)
        readings[spec.sensor_id] = float(value)
    return TelemetryFrame(profile.vehicle_id, t, readings)


def standardize(frame: TelemetryFrame, scaling: dict[str, tuple[float, float]]) -> np.ndarray:
    """Map readings to z-scores, ordered by sorted sensor id.

    Sensors with zero stddev standardize to 0.0 regardless of reading.
    """
    sensor_ids = sorted(frame.readings)
    missing = [s for s in sensor_ids if s not in scaling]
    if missing:
        raise SchemaMismatchError(f"no scaling entry for sensors {missing}")
    out = np.empty(len(sensor_ids))
    for i, sid in enumerate(sensor_ids):
        mean, stddev = scaling[sid]
        out[i] = 0.0 if stddev == 0 else (frame.readings[sid] - mean) / stddev
    return out


def feature_deviations(frame: TelemetryFrame, scaling: dict[str, tuple[float, float]]) -> dict[str, float]:
    """Per-sensor absolute standardized deviation, keyed by sensor id."""
    feats = standardize(frame, scaling)
    return {sid: abs(float(v)) for sid, v in zip(sorted(frame.readings), feats)}
