#!/usr/bin/env python3
"""Emit the bundled scenario fixtures into src/smellwatch/scenarios/.

One injection scenario per bound smell, one clean baseline, one
five-service case-study replica, and the 29-window detection-card
script. Re-run after changing the base topology; output is committed.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

OUT_DIR = Path(__file__).resolve().parents[1] / "src" / "smellwatch" / "scenarios"
START_US = 1_680_000_000_000_000  # aligned to 60 s windows


def endpoint(path: str, method: str = "GET", version: str | None = "v1") -> dict:
    ep = {"path": path, "http_method": method}
    if version:
        ep["version_label"] = version
    return ep


def base_services() -> list[dict]:
    return [
        {
            "name": "svc-gateway",
            "role": "gateway",
            "instances": 1,
            "baseline_rps": 1.0,
            "endpoints": [endpoint("/v1/route"), endpoint("/v1/status")],
            "dependencies": [{"target": "svc-order", "via": "http"},
                             {"target": "svc-user", "via": "http"}],
            "datastores": [],
            "libraries": [{"name": "commons-http", "category": "utility"}],
            "loc": 1800,
            "entity_count": 3,
            "business_methods": ["gateway.route", "gateway.status"],
            "base_latency_ms": 30.0,
        },
        {
            "name": "svc-order",
            "role": "service",
            "instances": 2,
            "baseline_rps": 1.0,
            "endpoints": [endpoint("/v1/orders"), endpoint("/v1/orders", "POST")],
            "dependencies": [{"target": "svc-billing", "via": "http"}],
            "datastores": ["db-order"],
            "libraries": [{"name": "commons-http", "category": "utility"}],
            "loc": 3200,
            "entity_count": 9,
            "business_methods": ["orders.list", "orders.create"],
            "base_latency_ms": 45.0,
        },
        {
            "name": "svc-user",
            "role": "service",
            "instances": 1,
            "baseline_rps": 1.0,
            "endpoints": [endpoint("/v1/users"), endpoint("/v1/users/search")],
            "dependencies": [],
            "datastores": ["db-user"],
            "libraries": [{"name": "commons-http", "category": "utility"}],
            "loc": 2600,
            "entity_count": 6,
            "business_methods": ["users.get", "users.search"],
            "base_latency_ms": 40.0,
        },
        {
            "name": "svc-billing",
            "role": "service",
            "instances": 1,
            "baseline_rps": 1.0,
            "endpoints": [endpoint("/v1/invoices")],
            "dependencies": [],
            "datastores": ["db-billing"],
            "libraries": [{"name": "commons-http", "category": "utility"}],
            "loc": 2900,
            "entity_count": 7,
            "business_methods": ["billing.charge", "billing.list"],
            "base_latency_ms": 50.0,
        },
        {
            "name": "svc-report",
            "role": "service",
            "instances": 2,
            "baseline_rps": 1.0,
            "endpoints": [endpoint("/v1/reports")],
            "dependencies": [{"target": "svc-user", "via": "http"}],
            "datastores": ["db-report"],
            "libraries": [{"name": "commons-http", "category": "utility"}],
            "loc": 2400,
            "entity_count": 5,
            "business_methods": ["reports.daily", "reports.weekly"],
            "base_latency_ms": 35.0,
        },
    ]


def scenario(name: str, seed: int, duration_s: int, services: list[dict],
             injections: list[dict]) -> dict:
    return {
        "name": name,
        "seed": seed,
        "start_us": START_US,
        "duration_s": duration_s,
        "window_s": 60,
        "report_interval_s": 5,
        "services": services,
        "injections": injections,
    }


def inj(smell_id: str, service: str, window_range: list[int], intensity: float = 1.0) -> dict:
    return {"smell_id": smell_id, "service": service,
            "window_range": window_range, "intensity": intensity}


# (smell, target, duration_s, window_range); static smells ignore the range.
RUNTIME_PLANS = [
    # chatty targets a leaf caller: inbound traffic would dilute the
    # calls-per-request denominator on a service that others call.
    ("chatty-service", "svc-report", 180, [1, 3]),
    ("bottleneck-service", "svc-billing", 180, [1, 3]),
    ("uneven-load-distribution", "svc-report", 180, [1, 3]),
    ("fragile-service", "svc-user", 180, [1, 3]),
    ("latency-degradation", "svc-user", 360, [4, 6]),
    ("n-plus-one-query", "svc-order", 180, [1, 3]),
    ("frequent-gc", "svc-billing", 180, [1, 3]),
    ("memory-jitter", "svc-user", 540, [3, 9]),
    ("cpu-saturation", "svc-order", 180, [1, 3]),
    ("call-rate-anomaly", "svc-billing", 360, [4, 6]),
    ("uneven-api-usage", "svc-user", 180, [1, 3]),
    ("long-call-chain-runtime", "svc-billing", 180, [1, 3]),
]

STATIC_PLANS = [
    ("esb-usage", "system"),
    ("microservice-greedy", "svc-user"),
    ("no-api-gateway", "system"),
    ("no-api-versioning", "svc-user"),
    ("hardcoded-endpoints", "svc-order"),
    ("shared-persistence", "svc-order"),
    ("cyclic-dependency", "svc-order"),
    ("shared-libraries", "svc-order"),
    ("mega-service", "svc-report"),
    ("nano-service", "svc-user"),
]


def star_services() -> list[dict]:
    services = [{
        "name": "svc-hub",
        "role": "service",
        "instances": 1,
        "baseline_rps": 1.0,
        "endpoints": [endpoint("/v1/fanout")],
        "dependencies": [],
        "datastores": ["db-hub"],
        "libraries": [],
        "loc": 2000,
        "entity_count": 4,
        "business_methods": ["hub.fanout"],
        "base_latency_ms": 30.0,
    }]
    for letter in "abcde":
        services.append({
            "name": f"svc-spoke-{letter}",
            "role": "service",
            "instances": 1,
            "baseline_rps": 1.0,
            "endpoints": [endpoint(f"/v1/{letter}")],
            "dependencies": [],
            "datastores": [f"db-{letter}"],
            "libraries": [],
            "loc": 2200,
            "entity_count": 4,
            "business_methods": [f"spoke.{letter}"],
            "base_latency_ms": 30.0,
        })
    return services


def chain_services() -> list[dict]:
    services = []
    for letter in "abcdef":
        services.append({
            "name": f"svc-chain-{letter}",
            "role": "service",
            "instances": 1,
            "baseline_rps": 1.0,
            "endpoints": [endpoint(f"/v1/{letter}")],
            "dependencies": [],
            "datastores": [f"db-{letter}"],
            "libraries": [],
            "loc": 2100,
            "entity_count": 4,
            "business_methods": [f"chain.{letter}"],
            "base_latency_ms": 30.0,
        })
    return services


def case_study_services() -> list[dict]:
    """Five modules; the user service ships unversioned and nothing plays gateway."""
    def svc(name: str, versioned: bool, deps: list[str], loc: int) -> dict:
        eps = ([endpoint(f"/v1/{name.split('-')[1]}")] if versioned
               else [{"path": f"/{name.split('-')[1]}", "http_method": "GET"}])
        return {
            "name": name,
            "role": "service",
            "instances": 1,
            "baseline_rps": 1.0,
            "endpoints": eps,
            "dependencies": [{"target": d, "via": "http"} for d in deps],
            "datastores": [f"db-{name.split('-')[1]}"],
            "libraries": [{"name": "commons-http", "category": "utility"}],
            "loc": loc,
            "entity_count": 6,
            "business_methods": [f"{name.split('-')[1]}.get", f"{name.split('-')[1]}.list"],
            "base_latency_ms": 40.0,
        }

    return [
        svc("cloud-user-service", False, [], 2800),
        svc("cloud-property-service", True, ["cloud-user-service"], 3100),
        svc("cloud-payment-service", True, ["cloud-user-service"], 2600),
        svc("cloud-repair-service", True, ["cloud-property-service"], 2400),
        svc("cloud-notice-service", True, ["cloud-user-service"], 2200),
    ]


def main() -> int:
    OUT_DIR.mkdir(parents=True, exist_ok=True)
    scenarios = []
    seed = 101

    for smell_id, target, duration, window_range in RUNTIME_PLANS:
        scenarios.append(scenario(
            f"inject-{smell_id}", seed, duration, base_services(),
            [inj(smell_id, target, window_range)]))
        seed += 1

    for smell_id, target in STATIC_PLANS:
        scenarios.append(scenario(
            f"inject-{smell_id}", seed, 120, base_services(),
            [inj(smell_id, target, [0, 2])]))
        seed += 1

    scenarios.append(scenario(
        "inject-hub-like-dependency", seed, 120, star_services(),
        [inj("hub-like-dependency", "svc-hub", [0, 2])]))
    seed += 1
    scenarios.append(scenario(
        "inject-long-service-chain-static", seed, 120, chain_services(),
        [inj("long-service-chain-static", "svc-chain-a", [0, 2])]))
    seed += 1

    scenarios.append(scenario("clean-baseline", seed, 480, base_services(), []))
    seed += 1
    scenarios.append(scenario("case-study-replica", seed, 180, case_study_services(), []))
    seed += 1
    scenarios.append(scenario(
        "detection-card-29-11", seed, 29 * 60, base_services(),
        [inj("fragile-service", "svc-user", [5, 8]),
         inj("fragile-service", "svc-user", [12, 17]),
         inj("fragile-service", "svc-user", [20, 23])]))

    for doc in scenarios:
        path = OUT_DIR / f"{doc['name']}.json"
        path.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
        print(f"wrote {path.relative_to(OUT_DIR.parents[2])}")

    # Smoke-check: every emitted file loads and generates.
    sys.path.insert(0, str(OUT_DIR.parents[1]))
    from smellwatch.catalog import bundled_catalog
    from smellwatch.simulate import generate, load_scenario

    catalog = bundled_catalog()
    for doc in scenarios:
        sc = load_scenario(OUT_DIR / f"{doc['name']}.json")
        out = generate(sc, catalog)
        assert out["manifests"] and out["batches"], doc["name"]
    print(f"{len(scenarios)} scenarios validated")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
