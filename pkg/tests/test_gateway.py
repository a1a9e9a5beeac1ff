import json

import numpy as np
import pytest

from fleetmaint.gateway import (
    AnomalyReport,
    EdgeGateway,
    GateState,
    classify,
    gate,
)
from fleetmaint.lof import LofParams
from fleetmaint.models import LinearClassifier, ModelSnapshot
from fleetmaint.telemetry import (
    FailureSignature,
    Route,
    SensorSpec,
    SpikePattern,
    VehicleProfile,
    generate_frame,
)

from oracles import oracle_perceptron

# frozen calibration: 100 clean frames, seed stream [0, 1, 0], threshold 2.0
CLEAN_STREAM_ENVELOPE_COUNT = 0


def _model(labels=None, threshold=2.0, margin=0.5, k=10, window=256, n_sensors=3):
    scaling = {f"s{i}": (10.0, 1.0) for i in range(n_sensors)}
    classifier = LinearClassifier() if labels is None else labels
    return ModelSnapshot(1, scaling, classifier, LofParams(k, window), threshold, margin)


def _profile(n_sensors=3, arrival=200_000):
    return VehicleProfile(
        "v1",
        tuple(SensorSpec(f"s{i}", "u", 10.0, 1.0) for i in range(n_sensors)),
        Route("a", "b", 0, arrival),
        1000,
    )


class TestClassify:
    def test_empty_classifier_unlabeled(self):
        assert classify(np.zeros(3), _model()) is None

    def test_below_margin_abstains(self):
        clf = LinearClassifier(
            {"a": np.array([1.0, 0, 0]), "b": np.array([0.9, 0, 0])},
            {"a": 0.0, "b": 0.0},
        )
        model = _model(labels=clf, margin=0.5)
        assert classify(np.array([1.0, 0, 0]), model) is None  # margin 0.1 < 0.5

    def test_confident_label(self):
        clf = LinearClassifier(
            {"a": np.array([1.0, 0, 0]), "b": np.array([-1.0, 0, 0])},
            {"a": 0.0, "b": 0.0},
        )
        model = _model(labels=clf, margin=0.5)
        label, confidence = classify(np.array([2.0, 0, 0]), model)
        assert label == "a"
        assert confidence == pytest.approx(4.0)

    def test_tie_breaks_lexicographically(self):
        clf = LinearClassifier(
            {"b": np.array([1.0, 0, 0]), "a": np.array([1.0, 0, 0])},
            {"b": 0.0, "a": 0.0},
        )
        model = _model(labels=clf, margin=0.0)
        label, _ = classify(np.array([1.0, 0, 0]), model)
        assert label == "a"

    def test_trained_model_matches_batch_oracle(self):
        # two separable clusters, trained via the cloud trainer
        from fleetmaint.cloud import train_averaged_perceptron

        rng = np.random.default_rng(100)
        samples = []
        for i in range(50):
            if i % 2 == 0:
                samples.append((rng.normal((3.0, 3.0, 0.0), 0.3), "hot"))
            else:
                samples.append((rng.normal((-3.0, -3.0, 0.0), 0.3), "cold"))
        clf = train_averaged_perceptron(samples)
        oracle = oracle_perceptron([(tuple(x), y) for x, y in samples])
        model = _model(labels=clf, margin=0.0)
        held_out = [rng.normal((3.0, 3.0, 0.0), 0.3) for _ in range(20)]
        held_out += [rng.normal((-3.0, -3.0, 0.0), 0.3) for _ in range(20)]
        for x in held_out:
            got = classify(x, model)
            assert got is not None
            assert got[0] == oracle(tuple(x))


class TestGate:
    def test_below_threshold_passes(self):
        decision, state = gate(0.9, 0, _model(), GateState(), 60_000, "ep1")
        assert decision.kind == "pass"
        assert state == GateState()

    def test_above_threshold_emits(self):
        decision, state = gate(3.0, 1000, _model(), GateState(), 60_000, "ep1")
        assert decision.kind == "emit"
        assert decision.episode_id == "ep1"
        assert state.cooldown_until == 61_000

    def test_within_cooldown_suppresses_same_episode(self):
        _, state = gate(3.0, 0, _model(), GateState(), 60_000, "ep1")
        decision, state2 = gate(3.1, 1000, _model(), state, 60_000, "ep2")
        assert decision.kind == "suppress"
        assert decision.episode_id == "ep1"
        assert state2 == state

    def test_new_episode_after_cooldown(self):
        _, state = gate(3.0, 0, _model(), GateState(), 60_000, "ep1")
        decision, _ = gate(3.0, 60_000, _model(), state, 60_000, "ep2")
        assert decision.kind == "emit"
        assert decision.episode_id == "ep2"


class TestIngest:
    def test_clean_stream_publishes_nothing(self):
        profile = _profile()
        gw = EdgeGateway("v1", _model())
        rng = np.random.default_rng(np.random.SeedSequence([0, 1, 0]))
        count = 0
        for t in range(0, 100_000, 1000):
            count += len(gw.ingest(generate_frame(profile, t, rng, [])))
        assert count == CLEAN_STREAM_ENVELOPE_COUNT

    def test_warmup_cannot_emit(self):
        profile = _profile()
        gw = EdgeGateway("v1", _model(k=10))
        rng = np.random.default_rng(0)
        sig = FailureSignature("sig", "v1", ("s0",), 0, SpikePattern(100.0), "p", "x")
        for t in range(0, 10_000, 1000):  # 10 frames < k+1
            assert gw.ingest(generate_frame(profile, t, rng, [sig])) == []

    def test_spike_emits_exactly_one_envelope(self):
        profile = _profile()
        gw = EdgeGateway("v1", _model())
        rng = np.random.default_rng(np.random.SeedSequence([0, 1, 0]))
        onset = 50_000
        sig = FailureSignature(
            "sig", "v1", ("s0",), onset, SpikePattern(20.0, every_n=10**6), "p", "hot"
        )
        envelopes = []
        for t in range(0, 100_000, 1000):
            envelopes += gw.ingest(generate_frame(profile, t, rng, [sig]))
        assert len(envelopes) == 1
        report = AnomalyReport.from_json(envelopes[0].payload.decode())
        assert report.window[0] <= onset <= report.window[1]
        assert report.score > 2.0
        assert envelopes[0].topic == "fleet/v1/anomaly"

    def test_cooldown_groups_alerts_into_one_episode(self):
        profile = _profile()
        gw = EdgeGateway("v1", _model(), cooldown_ms=60_000)
        rng = np.random.default_rng(np.random.SeedSequence([0, 1, 0]))
        sig = FailureSignature(
            "sig", "v1", ("s0",), 50_000, SpikePattern(20.0, every_n=1), "p", "hot"
        )
        envelopes = []
        for t in range(0, 100_000, 1000):
            envelopes += gw.ingest(generate_frame(profile, t, rng, [sig]))
        # persistent spiking within one cooldown window -> one report
        assert len(envelopes) == 1
        report = AnomalyReport.from_json(envelopes[0].payload.decode())
        assert gw.episode_frames(report.episode_id)  # suppressed frames recorded

    def test_report_label_abstain_dichotomy(self):
        profile = _profile()
        clf = LinearClassifier({"hot": np.array([1.0, 0, 0])}, {"hot": 0.0})
        gw = EdgeGateway("v1", _model(labels=clf, margin=1.0))
        rng = np.random.default_rng(np.random.SeedSequence([0, 1, 0]))
        sig = FailureSignature(
            "sig", "v1", ("s0",), 50_000, SpikePattern(20.0, every_n=10**6), "p", "hot"
        )
        envelopes = []
        for t in range(0, 100_000, 1000):
            envelopes += gw.ingest(generate_frame(profile, t, rng, [sig]))
        report = AnomalyReport.from_json(envelopes[0].payload.decode())
        assert (report.label is not None) == (report.confidence is not None)
        assert report.label == "hot"
        assert report.confidence >= 1.0


class TestApplyModel:
    def test_monotone_upgrade(self):
        gw = EdgeGateway("v1", _model())
        v2 = ModelSnapshot(
            2, gw.model.scaling, LinearClassifier(), gw.model.lof, 2.0, 0.5
        )
        assert gw.apply_model(v2) is True
        assert gw.model.version == 2

    def test_same_version_rejected(self):
        gw = EdgeGateway("v1", _model())
        same = ModelSnapshot(
            1, gw.model.scaling, LinearClassifier(), gw.model.lof, 9.0, 0.5
        )
        assert gw.apply_model(same) is False
        assert gw.model.alert_threshold == 2.0

    def test_stale_version_rejected(self):
        gw = EdgeGateway("v1", _model())
        gw.apply_model(ModelSnapshot(3, gw.model.scaling, LinearClassifier(), gw.model.lof, 2.0, 0.5))
        assert gw.apply_model(
            ModelSnapshot(2, gw.model.scaling, LinearClassifier(), gw.model.lof, 2.0, 0.5)
        ) is False
        assert gw.model.version == 3

    def test_window_restandardized_after_apply(self):
        profile = _profile()
        gw = EdgeGateway("v1", _model())
        rng = np.random.default_rng(1)
        for t in range(0, 20_000, 1000):
            gw.ingest(generate_frame(profile, t, rng, []))
        new_scaling = {f"s{i}": (0.0, 2.0) for i in range(3)}
        v2 = ModelSnapshot(2, new_scaling, LinearClassifier(), gw.model.lof, 2.0, 0.5)
        gw.apply_model(v2)
        window = gw._standardized_window()
        raw0 = gw._raw_window[0]
        expected = (raw0.readings["s0"] - 0.0) / 2.0
        assert window[0][0] == pytest.approx(expected)

    def test_version_never_decreases_over_lifetime(self):
        gw = EdgeGateway("v1", _model())
        seen = [gw.model.version]
        for v in [3, 2, 5, 4, 1, 6]:
            gw.apply_model(
                ModelSnapshot(v, gw.model.scaling, LinearClassifier(), gw.model.lof, 2.0, 0.5)
            )
            seen.append(gw.model.version)
        assert seen == sorted(seen)


def test_report_json_round_trip_and_field_order():
    report = AnomalyReport(
        report_id="v1-r1",
        vehicle_id="v1",
        episode_id="v1-ep1",
        window=(0, 5000),
        score=3.5,
        label=None,
        confidence=None,
        feature_deviations={"s1": 0.5, "s0": 3.0},
        model_version=1,
        raw_frames=(),
    )
    line = report.to_json()
    assert line.index('"report_id"') < line.index('"vehicle_id"') < line.index('"score"')
    assert AnomalyReport.from_json(line) == report
