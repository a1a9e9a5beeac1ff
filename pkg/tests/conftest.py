import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))  # for oracles.py

from fleetmaint.telemetry import Route, SensorSpec, VehicleProfile


@pytest.fixture
def basic_profile():
    return VehicleProfile(
        vehicle_id="v1",
        sensors=(
            SensorSpec("s0", "degC", 10.0, 1.0),
            SensorSpec("s1", "bar", 5.0, 0.5),
        ),
        route=Route("a", "b", 0, 600_000),
        sample_period=1000,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(42)
