from __future__ import annotations

import pytest

from cantids.detectors import DetectorConfig
from cantids.detectors.tuning import fit
from cantids.profile import estimate_cycle_times
from cantids.synth import generate_fleet_traces


@pytest.fixture(scope="session")
def fleet_traces():
    return generate_fleet_traces(3, 20.0, seed=5)


@pytest.fixture(scope="session")
def model(fleet_traces):
    return estimate_cycle_times(fleet_traces)


@pytest.fixture()
def config():
    return DetectorConfig()


@pytest.fixture(scope="session")
def tuned_config(fleet_traces, model):
    """Everything except the clock-skew grid search, which is too slow
    for a unit-test fixture; tests needing it run their own."""
    cfg = DetectorConfig()
    for name in ("otsuka14", "taylor15", "moore17", "stabili19",
                 "olufowobi20"):
        cfg = fit(name, fleet_traces, model, cfg)
    return cfg
