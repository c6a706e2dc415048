from __future__ import annotations

import pytest

from smellwatch.catalog import bundled_catalog
from smellwatch.engine import Pipeline
from smellwatch.simulate import Scenario, generate, replay
from smellwatch.static_analysis import parse_manifests
from smellwatch.store import SegmentedStore
from smellwatch.telemetry import TelemetryIngest

LATENESS_US = 60_000_000


@pytest.fixture(scope="session")
def catalog():
    return bundled_catalog()


def run_scenario(data_dir, scenario: Scenario, catalog, register_model: bool = True):
    """Generate, replay into a fresh store, and drain all cycles."""
    out = generate(scenario, catalog)
    store = SegmentedStore(data_dir)
    replay(out["batches"], ingest=TelemetryIngest(store))
    pipeline = Pipeline(store, catalog,
                        window_us=scenario.window_s * 1_000_000,
                        lateness_us=LATENESS_US)
    if register_model:
        pipeline.engine.register_model(parse_manifests(out["manifests"]))
    summaries = pipeline.run_all_cycles(scenario.end_us + LATENESS_US)
    return out, pipeline, summaries


@pytest.fixture
def scenario_runner(catalog, tmp_path):
    def _run(scenario: Scenario, register_model: bool = True):
        return run_scenario(tmp_path / "data", scenario, catalog, register_model)
    return _run
