"""Acceptance suite: one test per criterion, each printing a PASS line
through the capture bypass so the verdicts always reach the terminal.

Criteria cover the case-study replica, the 29/11 detection card, the
full injection/recall matrix, exhaustive cycle-oracle equivalence,
conservation and accounting exactness, idempotence, and the registry
contract.
"""

import json
import math
import random
import time
from fractions import Fraction

import pytest

from smellwatch.aggregation import (
    WindowSpec,
    aggregate_window,
    dedup,
    read_instance_aggregates,
    read_service_aggregates,
    rollup,
)
from smellwatch.cli import EXIT_SMELLS, main
from smellwatch.records import DetectionRunSummary, make_record
from smellwatch.results import ResultStore
from smellwatch.simulate import bundled_scenario, generate, replay
from smellwatch.static_analysis import STATIC_SMELL_IDS, find_cycles, parse_manifests
from smellwatch.store import SegmentedStore
from smellwatch.telemetry import TelemetryIngest

from conftest import run_scenario

T0 = 1_680_000_000_000_000
WINDOW_US = 60_000_000
LATENESS = 60_000_000


def announce(capsys, line: str) -> None:
    with capsys.disabled():
        print(f"\n[ACCEPTANCE] {line}: PASS", flush=True)


def test_criterion_1_case_study_replica(tmp_path, catalog, capsys):
    started = time.monotonic()
    scenario = bundled_scenario("case-study-replica")
    out = generate(scenario, catalog)
    manifest_dir = tmp_path / "manifests"
    manifest_dir.mkdir()
    for manifest in out["manifests"]:
        (manifest_dir / f"{manifest['name']}.json").write_text(json.dumps(manifest))

    code = main(["scan", "--manifests", str(manifest_dir), "--format", "json"])
    scan_records = json.loads(capsys.readouterr().out)
    assert code == EXIT_SMELLS

    store = SegmentedStore(tmp_path / "data")
    replay(out["batches"], ingest=TelemetryIngest(store))
    from smellwatch.engine import Pipeline
    pipeline = Pipeline(store, catalog)
    pipeline.engine.register_model(parse_manifests(out["manifests"]))
    pipeline.reintegrator.run_cycle(scenario.end_us + LATENESS)
    summary = pipeline.engine.run_detection_cycle(scenario.end_us)
    assert summary.executed

    cycle_records = pipeline.engine.results.records(
        summary.window["start_us"], summary.window["start_us"] + WINDOW_US)
    for records in (
        [(r["smell_id"], r["scope"]) for r in scan_records if r["detected"]],
        [(r.smell_id, r.scope) for r in cycle_records
         if r.detected and r.smell_id in STATIC_SMELL_IDS],
    ):
        assert set(records) == {("no-api-versioning", "cloud-user-service"),
                                ("no-api-gateway", "system")}
    assert not [r for r in cycle_records
                if r.detected and r.smell_id not in STATIC_SMELL_IDS]

    elapsed = time.monotonic() - started
    assert elapsed < 5.0
    announce(capsys, f"1 case-study replica (versioning+gateway on "
                     f"cloud-user-service, {elapsed:.2f}s < 5s)")


def test_criterion_2_detection_card_29_11(tmp_path, catalog, capsys):
    started = time.monotonic()
    scenario = bundled_scenario("detection-card-29-11")
    out, pipeline, summaries = run_scenario(tmp_path / "data", scenario, catalog)
    card = pipeline.engine.results.query_summary(
        scenario.start_us, scenario.end_us, catalog)
    assert card.executed == 29
    assert card.positive == 11
    assert len(summaries) == 29
    elapsed = time.monotonic() - started
    assert elapsed < 30.0
    announce(capsys, f"2 detection card executed=29 positive=11 ({elapsed:.2f}s < 30s)")


def test_criterion_3_injection_recall_suite(tmp_path, catalog, capsys):
    started = time.monotonic()
    missed = []
    for entry in sorted(catalog.bound_ids()):
        scenario = bundled_scenario(f"inject-{entry}")
        injection = scenario.injections[0]
        _, pipeline, _ = run_scenario(tmp_path / entry, scenario, catalog)
        records = pipeline.engine.results.records(scenario.start_us, scenario.end_us)
        hit = [r for r in records if r.smell_id == entry and r.detected
               and (injection.service == "system" or r.scope == injection.service)]
        if not hit:
            missed.append(entry)
    assert missed == []

    clean = bundled_scenario("clean-baseline")
    _, pipeline, _ = run_scenario(tmp_path / "clean", clean, catalog)
    detected = [r for r in pipeline.engine.results.records(clean.start_us, clean.end_us)
                if r.detected]
    assert detected == []

    elapsed = time.monotonic() - started
    assert elapsed < 120.0
    announce(capsys, f"3 injection recall 24/24 + clean scenario zero "
                     f"detections ({elapsed:.1f}s < 120s)")


def brute_cycles(adj):
    found = set()

    def extend(path, seen):
        for nxt in sorted(adj.get(path[-1], ())):
            if nxt == path[0]:
                k = min(range(len(path)), key=lambda i: path[i])
                found.add(tuple(path[k:] + path[:k]))
            elif nxt not in seen:
                extend(path + [nxt], seen | {nxt})

    for node in sorted(adj):
        extend([node], {node})
    return sorted(list(c) for c in found)


def test_criterion_4_cycle_oracle_exhaustive(capsys):
    started = time.monotonic()
    checked = 0
    for n in range(1, 6):
        nodes = [chr(ord("a") + i) for i in range(n)]
        pairs = [(x, y) for x in nodes for y in nodes if x != y]
        for mask in range(1 << len(pairs)):
            adj = {node: [] for node in nodes}
            for i, (x, y) in enumerate(pairs):
                if mask >> i & 1:
                    adj[x].append(y)
            assert find_cycles(adj) == brute_cycles(adj)
            checked += 1
    elapsed = time.monotonic() - started
    announce(capsys, f"4 cycle enumeration equals oracle on all {checked} "
                     f"labeled digraphs with <=5 nodes ({elapsed:.0f}s)")


def _random_window_records(rng, window_start):
    services = ["a", "b", "c"]
    records = []
    for i in range(rng.randrange(20, 120)):
        svc = rng.choice(services)
        kind = rng.choice(["server", "client", "db"])
        record = {
            "trace_id": f"t{rng.randrange(40)}",
            "span_id": f"s{window_start}-{i}",
            "parent_span_id": None,
            "service": svc,
            "instance": f"{svc}-{rng.randrange(2)}",
            "operation": "/x",
            "kind": kind,
            "start_us": window_start + rng.randrange(0, WINDOW_US),
            "duration_us": rng.randrange(1000, 900_000),
            "status": rng.choice(["ok", "ok", "error"]),
        }
        if kind == "client":
            record["peer_service"] = rng.choice([s for s in services if s != svc])
        if kind == "db":
            record["db_statement_kind"] = "select"
        records.append(record)
    for i in range(rng.randrange(5, 25)):
        svc = rng.choice(services)
        records.append({
            "service": svc, "instance": f"{svc}-{rng.randrange(2)}",
            "ts_us": window_start + rng.randrange(0, WINDOW_US),
            "cpu_frac": rng.random(), "heap_used_bytes": rng.randrange(1000, 5000),
            "heap_max_bytes": 10_000, "gc_count_delta": rng.randrange(4),
            "gc_pause_ms_delta": rng.random() * 10,
        })
    for i in range(rng.randrange(5, 25)):
        svc = rng.choice(services)
        calls = rng.randrange(0, 30)
        records.append({
            "service": svc, "instance": f"{svc}-{rng.randrange(2)}",
            "method": rng.choice(["m.a", "m.b"]),
            "ts_us": window_start + rng.randrange(0, WINDOW_US),
            "call_count_delta": calls,
            "error_count_delta": rng.randrange(0, calls + 1),
            "latency_sum_ms_delta": calls * 40.0,
        })
    # inject exact duplicates to exercise the dedup stage
    records.extend(rng.choice(records) for _ in range(rng.randrange(0, 15)))
    rng.shuffle(records)
    return records


def test_criterion_5_conservation_properties(capsys):
    rng = random.Random(2024)
    for w in range(100):
        window_start = T0 + w * WINDOW_US
        spec = WindowSpec(start_us=window_start, length_us=WINDOW_US)
        raw = _random_window_records(rng, window_start)
        deduped = dedup(raw)
        aggregates = aggregate_window(deduped, spec)

        # Brute-force recounts per (service, instance).
        for agg in aggregates:
            def mine(kind):
                return [r for r in deduped if "span_id" in r
                        and r["service"] == agg.service
                        and r["instance"] == agg.instance and r["kind"] == kind]

            servers = mine("server")
            assert agg.server_requests == len(servers)
            assert agg.error_requests == sum(1 for s in servers if s["status"] == "error")
            assert agg.sql_calls == len(mine("db"))
            clients = mine("client")
            out_total = {}
            for s in clients:
                out_total[s["peer_service"]] = out_total.get(s["peer_service"], 0) + 1
            assert agg.out_calls == dict(sorted(out_total.items()))

            metrics = [r for r in deduped if "cpu_frac" in r
                       and r["service"] == agg.service and r["instance"] == agg.instance]
            assert agg.gc_count == sum(m["gc_count_delta"] for m in metrics)

            samples = [r for r in deduped if "method" in r
                       and r["service"] == agg.service and r["instance"] == agg.instance]
            calls = sum(s["call_count_delta"] for s in samples)
            assert sum(e["calls"] for e in agg.business_calls.values()) == calls

            # sort-based percentile oracle, exact
            latencies = sorted(s["duration_us"] / 1000.0 for s in servers)
            if latencies:
                assert agg.latency_p50_ms == latencies[max(1, math.ceil(0.5 * len(latencies))) - 1]
                assert agg.latency_p95_ms == latencies[max(1, math.ceil(0.95 * len(latencies))) - 1]

        # Rollup linearity, exact.
        by_service = {}
        for agg in aggregates:
            by_service.setdefault(agg.service, []).append(agg)
        for service, instances in by_service.items():
            rolled = rollup(instances)
            assert rolled.server_requests == sum(a.server_requests for a in instances)
            assert rolled.error_requests == sum(a.error_requests for a in instances)
            assert rolled.sql_calls == sum(a.sql_calls for a in instances)
            assert rolled.gc_count == sum(a.gc_count for a in instances)
            assert rolled.in_calls == sum(a.in_calls for a in instances)
    announce(capsys, "5 conservation recounts exact over 100 randomized windows")


def test_criterion_6_idempotence(tmp_path, catalog, capsys):
    scenario = bundled_scenario("case-study-replica")
    out = generate(scenario, catalog)
    now = scenario.end_us + LATENESS

    def strip(record):
        d = record.to_dict()
        d.pop("run_id")
        d.pop("created_at_us")
        return d

    from smellwatch.engine import Pipeline
    stores = {}
    for label, sends in (("once", 1), ("twice", 2)):
        store = SegmentedStore(tmp_path / label)
        ingest = TelemetryIngest(store)
        for _ in range(sends):
            replay(out["batches"], ingest=ingest)
        pipeline = Pipeline(store, catalog)
        pipeline.engine.register_model(parse_manifests(out["manifests"]))
        pipeline.run_all_cycles(now)
        stores[label] = (store, pipeline)

    for reader in (read_service_aggregates, read_instance_aggregates):
        assert ([a.to_dict() for a in reader(stores["once"][0], scenario.start_us, scenario.end_us)]
                == [a.to_dict() for a in reader(stores["twice"][0], scenario.start_us, scenario.end_us)])
    records_once = [strip(r) for r in
                    stores["once"][1].engine.results.records(scenario.start_us, scenario.end_us)]
    records_twice = [strip(r) for r in
                     stores["twice"][1].engine.results.records(scenario.start_us, scenario.end_us)]
    assert records_once == records_twice

    # Re-running over processed windows emits nothing new.
    store, pipeline = stores["once"]
    assert pipeline.reintegrator.run_cycle(now) == []
    assert not pipeline.engine.run_detection_cycle(now).executed
    announce(capsys, "6 duplicate replay and re-run cycles change nothing")


def test_criterion_7_registry_contract(tmp_path, catalog, capsys):
    scenario = bundled_scenario("clean-baseline")
    out = generate(scenario, catalog)
    store = SegmentedStore(tmp_path / "data")
    replay(out["batches"], ingest=TelemetryIngest(store))
    from smellwatch.engine import DetectionEngine, Pipeline
    pipeline = Pipeline(store, catalog)
    pipeline.reintegrator.run_cycle(scenario.end_us + LATENESS)

    pipeline.engine.set_algorithm_status("n-plus-one-query", False)
    first = pipeline.engine.run_detection_cycle(scenario.end_us)
    window_records = lambda s: pipeline.engine.results.records(
        s.window["start_us"], s.window["start_us"] + WINDOW_US)
    assert not [r for r in window_records(first) if r.smell_id == "n-plus-one-query"]

    pipeline.engine.set_algorithm_status("n-plus-one-query", True)
    second = pipeline.engine.run_detection_cycle(scenario.end_us)
    assert [r for r in window_records(second) if r.smell_id == "n-plus-one-query"]

    pipeline.engine.set_algorithm_status("cpu-saturation", False)
    store.close()
    reopened = DetectionEngine(SegmentedStore(tmp_path / "data"), catalog)
    assert reopened.registry.is_online("cpu-saturation") is False
    assert reopened.registry.is_online("n-plus-one-query") is True
    announce(capsys, "7 registry offline/online contract and restart persistence")


def test_criterion_8_accounting_exactness(tmp_path, catalog, capsys):
    rng = random.Random(808)
    store = SegmentedStore(tmp_path / "acct")
    results = ResultStore(store)
    smells = sorted(catalog.bound_ids())[:8]
    scopes = ["svc-a", "svc-b", "svc-c", "system"]

    for idx in range(60):
        run_id = f"acc-{idx}"
        window = {"start_us": T0 + idx * WINDOW_US, "length_us": WINDOW_US}
        records = []
        for smell in rng.sample(smells, rng.randrange(2, len(smells))):
            for scope in scopes:
                detected = rng.random() < 0.3
                records.append(make_record(
                    smell, scope, 10.0 if detected else 0.0, ">=", 1.0, {}, {},
                    run_id=run_id, window=window))
        summary = DetectionRunSummary(
            run_id=run_id, window=window, executed=True,
            positive=any(r.detected for r in records), record_count=len(records))
        results.store_run(summary, records)

    lo, hi = T0 + 7 * WINDOW_US, T0 + 51 * WINDOW_US
    card = results.query_summary(lo, hi, catalog)
    serialized = json.loads(json.dumps(card.to_dict()))

    # Full-scan oracle with exact rationals.
    runs = results.runs(lo, hi)
    records = results.records(lo, hi)
    assert serialized["executed"] == len(runs)
    assert serialized["positive"] == sum(1 for r in runs if r.positive)

    per_smell = {}
    for record in records:
        det, total = per_smell.get(record.smell_id, (0, 0))
        per_smell[record.smell_id] = (det + record.detected, total + 1)
    outer = {seg["smell_id"]: seg for seg in serialized["outer_ring"]}
    assert set(outer) == set(per_smell)
    for smell, (det, total) in per_smell.items():
        assert abs(outer[smell]["detected_fraction"] - Fraction(det, total)) <= 1e-9
        assert abs(outer[smell]["detected_fraction"]
                   + outer[smell]["not_detected_fraction"] - 1) <= 1e-9

    buckets = {}
    for smell in per_smell:
        entry = catalog.get_entry(smell)
        key = (entry.primary_type, entry.secondary_type)
        buckets[key] = buckets.get(key, 0) + 1
    inner_sum = 0.0
    for seg in serialized["inner_ring"]:
        expected = Fraction(buckets[(seg["primary_type"], seg["secondary_type"])],
                            len(per_smell))
        assert abs(seg["fraction"] - expected) <= 1e-9
        inner_sum += seg["fraction"]
    assert abs(inner_sum - 1.0) <= 1e-9
    announce(capsys, "8 accounting equals full-scan recount within 1e-9")
