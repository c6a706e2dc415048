import pytest

from smellwatch.engine import DetectionEngine, Pipeline, UnknownSmellError
from smellwatch.runtime_rules import RUNTIME_SMELL_IDS
from smellwatch.simulate import bundled_scenario, generate, replay
from smellwatch.static_analysis import STATIC_SMELL_IDS, parse_manifests
from smellwatch.store import SegmentedStore
from smellwatch.telemetry import TelemetryIngest

LATENESS = 60_000_000


def seeded_pipeline(tmp_path, catalog, scenario_name="clean-baseline"):
    scenario = bundled_scenario(scenario_name)
    out = generate(scenario, catalog)
    store = SegmentedStore(tmp_path)
    replay(out["batches"], ingest=TelemetryIngest(store))
    pipeline = Pipeline(store, catalog)
    pipeline.engine.register_model(parse_manifests(out["manifests"]))
    return scenario, out, pipeline


def test_cycle_with_no_data(tmp_path, catalog):
    pipeline = Pipeline(SegmentedStore(tmp_path), catalog)
    summary = pipeline.engine.run_detection_cycle()
    assert not summary.executed
    assert summary.record_count == 0


def test_cycle_processes_newest_window_first(tmp_path, catalog):
    scenario, _, pipeline = seeded_pipeline(tmp_path, catalog)
    pipeline.reintegrator.run_cycle(scenario.end_us + LATENESS)
    first = pipeline.engine.run_detection_cycle(scenario.end_us)
    second = pipeline.engine.run_detection_cycle(scenario.end_us)
    assert first.executed and second.executed
    assert first.window["start_us"] > second.window["start_us"]


def test_same_window_not_processed_twice(tmp_path, catalog):
    scenario, _, pipeline = seeded_pipeline(tmp_path, catalog)
    summaries = pipeline.run_all_cycles(scenario.end_us + LATENESS)
    assert len(summaries) == scenario.n_windows
    again = pipeline.engine.run_detection_cycle(scenario.end_us)
    assert not again.executed


def test_record_completeness_per_cycle(tmp_path, catalog):
    scenario, out, pipeline = seeded_pipeline(tmp_path, catalog)
    summaries = pipeline.run_all_cycles(scenario.end_us + LATENESS)
    services = {m["name"] for m in out["manifests"]}
    static_count = 2 + 10 * len(services)  # 2 system-wide + 10 per-service smells
    runtime_count = len(RUNTIME_SMELL_IDS) * len(services)
    for summary in summaries:
        assert summary.record_count == static_count + runtime_count


def test_offline_smell_produces_no_records(tmp_path, catalog):
    scenario, _, pipeline = seeded_pipeline(tmp_path, catalog)
    pipeline.engine.set_algorithm_status("chatty-service", False)
    pipeline.run_all_cycles(scenario.end_us + LATENESS)
    records = pipeline.engine.results.records(scenario.start_us, scenario.end_us)
    assert records
    assert not [r for r in records if r.smell_id == "chatty-service"]


def test_toggle_back_online_resumes(tmp_path, catalog):
    scenario, _, pipeline = seeded_pipeline(tmp_path, catalog)
    pipeline.reintegrator.run_cycle(scenario.end_us + LATENESS)

    pipeline.engine.set_algorithm_status("chatty-service", False)
    first = pipeline.engine.run_detection_cycle(scenario.end_us)
    pipeline.engine.set_algorithm_status("chatty-service", True)
    second = pipeline.engine.run_detection_cycle(scenario.end_us)

    def chatty_in(window):
        records = pipeline.engine.results.records(
            window["start_us"], window["start_us"] + window["length_us"])
        return [r for r in records if r.smell_id == "chatty-service"]

    assert not chatty_in(first.window)
    assert chatty_in(second.window)


def test_offline_static_smell_excluded_from_merge(tmp_path, catalog):
    scenario, _, pipeline = seeded_pipeline(tmp_path, catalog)
    pipeline.engine.set_algorithm_status("mega-service", False)
    pipeline.run_all_cycles(scenario.end_us + LATENESS)
    records = pipeline.engine.results.records(scenario.start_us, scenario.end_us)
    assert not [r for r in records if r.smell_id == "mega-service"]
    assert {r.smell_id for r in records} >= set(STATIC_SMELL_IDS) - {"mega-service"}


def test_registry_survives_restart(tmp_path, catalog):
    scenario, _, pipeline = seeded_pipeline(tmp_path, catalog)
    pipeline.engine.set_algorithm_status("frequent-gc", False)
    pipeline.store.close()

    reopened = SegmentedStore(tmp_path)
    engine = DetectionEngine(reopened, catalog)
    assert engine.registry.is_online("frequent-gc") is False
    assert engine.registry.is_online("chatty-service") is True


def test_unknown_smell_rejected(tmp_path, catalog):
    pipeline = Pipeline(SegmentedStore(tmp_path), catalog)
    with pytest.raises(UnknownSmellError):
        pipeline.engine.set_algorithm_status("not-a-smell", True)


def test_registry_snapshot_covers_all_bound_entries(tmp_path, catalog):
    pipeline = Pipeline(SegmentedStore(tmp_path), catalog)
    snapshot = pipeline.engine.registry.snapshot()
    assert set(snapshot) == catalog.bound_ids()
    assert all(snapshot.values())


def test_settle_aware_cycles_never_race_a_replay(tmp_path, catalog):
    # A scheduler tick in the middle of a bulk historical replay must not
    # aggregate half-filled windows or skip the ones still in flight.
    scenario = bundled_scenario("case-study-replica")
    out = generate(scenario, catalog)
    wall_now = scenario.end_us + 10 * LATENESS

    raced = SegmentedStore(tmp_path / "raced")
    ingest = TelemetryIngest(raced)
    pipeline = Pipeline(raced, catalog)
    batches = out["batches"]
    for i, batch in enumerate(batches):
        replay([batch], ingest=ingest)
        if i % 40 == 0:
            pipeline.run_all_cycles(wall_now, settle_aware=True)
    pipeline.run_all_cycles(wall_now, settle_aware=True)  # stream went idle
    pipeline.run_all_cycles(wall_now, settle_aware=True)

    clean = SegmentedStore(tmp_path / "clean")
    replay(batches, ingest=TelemetryIngest(clean))
    Pipeline(clean, catalog).run_all_cycles(wall_now)

    from smellwatch.aggregation import read_service_aggregates
    read = lambda store: [a.to_dict() for a in
                          read_service_aggregates(store, scenario.start_us, scenario.end_us)]
    assert read(raced) == read(clean)
    assert len(pipeline.engine.results.processed_window_starts()) == scenario.n_windows


def test_static_results_restamped_per_run(tmp_path, catalog):
    scenario, _, pipeline = seeded_pipeline(tmp_path, catalog, "case-study-replica")
    summaries = pipeline.run_all_cycles(scenario.end_us + LATENESS)
    assert all(s.positive for s in summaries)  # versioning+gateway in every run
    for summary in summaries:
        records = pipeline.engine.results.records(
            summary.window["start_us"],
            summary.window["start_us"] + summary.window["length_us"])
        static = [r for r in records if r.smell_id in STATIC_SMELL_IDS]
        assert static
        assert all(r.run_id == summary.run_id for r in static)
        assert all(r.window == summary.window for r in static)
