"""Deterministic workload simulator: turns a scenario file into service
manifests plus a time-ordered telemetry stream, with injectable smell
conditions per window range.

Construction guarantees, relied on by the acceptance suite:
  * baseline traffic keeps every detector statistic at or below 0.8x its
    threshold (jitter is capped at 4%);
  * an injection drives its target statistic to at least 1.2x the
    threshold in the injected windows, except for ceiling-bound
    statistics (shares and cpu fractions cannot exceed 1.0) which are
    pushed to their documented caps;
  * the same scenario and seed always produce byte-identical output.
"""

from __future__ import annotations

import copy
import json
import math
import random
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .catalog import Catalog

WINDOW_S_DEFAULT = 60
REPORT_INTERVAL_S_DEFAULT = 5

# Statistics injected past threshold use this slack; 1.3 on raw values
# leaves room for the +-4% jitter while staying above the 1.2x contract.
INJECT_FACTOR = 1.3

RUNTIME_INJECTABLE = {
    "chatty-service", "bottleneck-service", "uneven-load-distribution",
    "fragile-service", "latency-degradation", "n-plus-one-query",
    "frequent-gc", "memory-jitter", "cpu-saturation", "call-rate-anomaly",
    "uneven-api-usage", "long-call-chain-runtime",
}
STATIC_INJECTABLE = {
    "esb-usage", "microservice-greedy", "no-api-gateway", "no-api-versioning",
    "hardcoded-endpoints", "shared-persistence", "cyclic-dependency",
    "hub-like-dependency", "shared-libraries", "mega-service", "nano-service",
    "long-service-chain-static",
}


class ScenarioError(ValueError):
    """The scenario document is malformed or references unknown entities."""


class ReplayError(RuntimeError):
    """The replay target stayed unreachable after bounded retries."""


@dataclass
class ServiceSpec:
    name: str
    role: str = "service"
    instances: int = 1
    baseline_rps: float = 1.0
    endpoints: list[dict] = field(default_factory=list)
    dependencies: list[dict] = field(default_factory=list)
    datastores: list[str] = field(default_factory=list)
    libraries: list[dict] = field(default_factory=list)
    loc: int = 2000
    entity_count: int = 5
    business_methods: list[str] = field(default_factory=list)
    base_latency_ms: float = 40.0
    sql_per_request: int = 1
    cpu_baseline: float = 0.2
    heap_max_bytes: int = 512 * 1024 * 1024


@dataclass
class Injection:
    smell_id: str
    service: str
    window_range: tuple[int, int]
    intensity: float = 1.0


@dataclass
class Scenario:
    name: str
    seed: int
    start_us: int
    duration_s: int
    services: list[ServiceSpec]
    injections: list[Injection] = field(default_factory=list)
    window_s: int = WINDOW_S_DEFAULT
    report_interval_s: int = REPORT_INTERVAL_S_DEFAULT

    @property
    def window_us(self) -> int:
        return self.window_s * 1_000_000

    @property
    def n_windows(self) -> int:
        return self.duration_s // self.window_s

    @property
    def end_us(self) -> int:
        return self.start_us + self.duration_s * 1_000_000

    def validate(self, catalog: Catalog | None = None) -> None:
        if self.start_us % self.window_us != 0:
            raise ScenarioError("start_us must be aligned to the window length")
        if self.duration_s % self.window_s != 0:
            raise ScenarioError("duration_s must be a whole number of windows")
        names = {s.name for s in self.services}
        if len(names) != len(self.services):
            raise ScenarioError("duplicate service names")
        for inj in self.injections:
            if catalog is not None and inj.smell_id not in catalog.bound_ids():
                raise ScenarioError(f"injection references unknown smell {inj.smell_id!r}")
            if inj.smell_id not in RUNTIME_INJECTABLE | STATIC_INJECTABLE:
                raise ScenarioError(f"no injection recipe for smell {inj.smell_id!r}")
            if inj.service != "system" and inj.service not in names:
                raise ScenarioError(f"injection targets unknown service {inj.service!r}")
            a, b = inj.window_range
            if not (0 <= a < b <= self.n_windows):
                raise ScenarioError(
                    f"injection window_range {inj.window_range} outside [0, {self.n_windows}]")
            if inj.intensity < 1.0:
                raise ScenarioError("injection intensity must be >= 1")


def load_scenario(source: str | Path | dict) -> Scenario:
    if isinstance(source, (str, Path)):
        doc = json.loads(Path(source).read_text(encoding="utf-8"))
    else:
        doc = source
    try:
        services = [ServiceSpec(**raw) for raw in doc["services"]]
        injections = [
            Injection(
                smell_id=raw["smell_id"],
                service=raw["service"],
                window_range=tuple(raw["window_range"]),
                intensity=float(raw.get("intensity", 1.0)),
            )
            for raw in doc.get("injections", [])
        ]
        return Scenario(
            name=doc["name"],
            seed=int(doc["seed"]),
            start_us=int(doc["start_us"]),
            duration_s=int(doc["duration_s"]),
            services=services,
            injections=injections,
            window_s=int(doc.get("window_s", WINDOW_S_DEFAULT)),
            report_interval_s=int(doc.get("report_interval_s", REPORT_INTERVAL_S_DEFAULT)),
        )
    except (KeyError, TypeError) as exc:
        raise ScenarioError(f"scenario document invalid: {exc}") from exc


def bundled_scenario_names() -> list[str]:
    root = resources.files("smellwatch.scenarios")
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def bundled_scenario(name: str) -> Scenario:
    data = resources.files("smellwatch.scenarios").joinpath(f"{name}.json").read_text()
    return load_scenario(json.loads(data))


# --- static manifest transforms -------------------------------------------

def _apply_static_injection(specs: list[ServiceSpec], inj: Injection) -> None:
    by_name = {s.name: s for s in specs}
    others = [s for s in specs if s.name != inj.service and s.role != "message_bus"]

    if inj.smell_id == "esb-usage":
        bus = ServiceSpec(name="message-bus", role="message_bus", instances=1,
                          baseline_rps=0.0, loc=800,
                          endpoints=[{"path": "/v1/publish", "http_method": "POST",
                                      "version_label": "v1"}],
                          business_methods=["bus.publish"])
        for spec in specs:
            spec.dependencies = [{"target": "message-bus", "via": "bus"}]
        specs.append(bus)
    elif inj.smell_id == "no-api-gateway":
        for spec in specs:
            if spec.role == "gateway":
                spec.role = "service"
    elif inj.smell_id == "microservice-greedy":
        spec = by_name[inj.service]
        spec.endpoints = spec.endpoints[:1] or [
            {"path": "/v1/ping", "http_method": "GET", "version_label": "v1"}]
        spec.loc = 300
    elif inj.smell_id == "no-api-versioning":
        spec = by_name[inj.service]
        spec.endpoints = [
            {"path": _strip_version(ep["path"]), "http_method": ep["http_method"]}
            for ep in spec.endpoints
        ] or [{"path": "/items", "http_method": "GET"}]
    elif inj.smell_id == "hardcoded-endpoints":
        by_name[inj.service].dependencies.append(
            {"target": "http://10.0.0.7:8081", "via": "http"})
    elif inj.smell_id == "shared-persistence":
        sibling = others[0]
        by_name[inj.service].datastores.append("db-shared")
        sibling.datastores.append("db-shared")
    elif inj.smell_id == "cyclic-dependency":
        sibling = others[0]
        by_name[inj.service].dependencies.append({"target": sibling.name, "via": "http"})
        sibling.dependencies.append({"target": inj.service, "via": "http"})
    elif inj.smell_id == "hub-like-dependency":
        by_name[inj.service].dependencies = [
            {"target": s.name, "via": "http"} for s in others]
    elif inj.smell_id == "shared-libraries":
        sibling = others[0]
        lib = {"name": "billing-core", "category": "business"}
        by_name[inj.service].libraries.append(dict(lib))
        sibling.libraries.append(dict(lib))
    elif inj.smell_id == "mega-service":
        spec = by_name[inj.service]
        spec.endpoints = [
            {"path": f"/v1/op{i}", "http_method": "GET", "version_label": "v1"}
            for i in range(25)
        ]
        spec.loc = 15000
    elif inj.smell_id == "nano-service":
        spec = by_name[inj.service]
        spec.loc = 150
        spec.dependencies = [{"target": s.name, "via": "http"} for s in others[:3]]
    elif inj.smell_id == "long-service-chain-static":
        chain = [by_name[inj.service]] + others
        for spec in chain:
            spec.dependencies = []
        for prev, nxt in zip(chain, chain[1:]):
            prev.dependencies = [{"target": nxt.name, "via": "http"}]


def _strip_version(path: str) -> str:
    parts = [p for p in path.split("/") if p]
    parts = [p for p in parts if not (p.startswith("v") and p[1:].isdigit())]
    return "/" + "/".join(parts) if parts else "/items"


def _to_manifest(spec: ServiceSpec) -> dict:
    return {
        "name": spec.name,
        "version": "1.0.0",
        "role": spec.role,
        "endpoints": spec.endpoints,
        "dependencies": spec.dependencies,
        "datastores": spec.datastores,
        "libraries": spec.libraries,
        "loc": spec.loc,
        "entity_count": spec.entity_count,
    }


# --- telemetry generation --------------------------------------------------

class _BatchSink:
    """Groups records into per-agent batches keyed by report interval."""

    def __init__(self, start_us: int, interval_us: int):
        self.start_us = start_us
        self.interval_us = interval_us
        self.batches: dict[tuple[int, str, str], dict] = {}

    def _batch(self, ts_us: int, service: str, instance: str) -> dict:
        idx = (ts_us - self.start_us) // self.interval_us
        key = (idx, service, instance)
        if key not in self.batches:
            self.batches[key] = {
                "producer": f"{service}:{instance}",
                "spans": [], "metrics": [], "business": [],
            }
        return self.batches[key]

    def span(self, record: dict) -> None:
        self._batch(record["start_us"], record["service"], record["instance"])["spans"].append(record)

    def metric(self, record: dict) -> None:
        self._batch(record["ts_us"], record["service"], record["instance"])["metrics"].append(record)

    def business(self, record: dict) -> None:
        self._batch(record["ts_us"], record["service"], record["instance"])["business"].append(record)

    def ordered(self) -> list[dict]:
        return [self.batches[key] for key in sorted(self.batches)]


def _jitter(rng: random.Random, value: float, spread: float = 0.04) -> float:
    return value * (1.0 + rng.uniform(-spread, spread))


def _split_exact(total: int, weights: list[float]) -> list[int]:
    """Integer split of `total` proportional to weights, exact by remainder."""
    raw = [total * w for w in weights]
    counts = [int(x) for x in raw]
    remainder = total - sum(counts)
    order = sorted(range(len(raw)), key=lambda i: raw[i] - counts[i], reverse=True)
    for i in order[:remainder]:
        counts[i] += 1
    return counts


class _Generator:
    def __init__(self, scenario: Scenario, catalog: Catalog | None):
        scenario.validate(catalog)
        self.scenario = scenario
        self.rng = random.Random(scenario.seed)
        self.window_us = scenario.window_us
        self.interval_us = scenario.report_interval_s * 1_000_000
        self.sink = _BatchSink(scenario.start_us, self.interval_us)
        self._span_counter = 0
        self._rr: dict[str, int] = {}
        self._err_counter: dict[tuple[str, int], int] = {}

        self.specs = copy.deepcopy(scenario.services)
        for inj in scenario.injections:
            if inj.smell_id in STATIC_INJECTABLE:
                _apply_static_injection(self.specs, inj)
        self.by_name = {s.name: s for s in self.specs}

    def _next_id(self) -> str:
        self._span_counter += 1
        return f"{self._span_counter:012x}"

    def _trace_id(self) -> str:
        return f"t{self._next_id()}"

    def _pick_instance(self, spec: ServiceSpec, skew: bool, j: int) -> str:
        if spec.instances <= 1:
            return f"{spec.name}-0"
        if skew:
            idx = 0 if j % 10 < 8 else 1 + (j % (spec.instances - 1))
        else:
            counter = self._rr.get(spec.name, 0)
            self._rr[spec.name] = counter + 1
            idx = counter % spec.instances
        return f"{spec.name}-{idx}"

    def _active(self, service: str, window: int) -> dict[str, Injection]:
        out = {}
        for inj in self.scenario.injections:
            if inj.smell_id in RUNTIME_INJECTABLE and inj.service == service \
                    and inj.window_range[0] <= window < inj.window_range[1]:
                out[inj.smell_id] = inj
        return out

    def _server_latency_ms(self, spec: ServiceSpec, window: int) -> float:
        active = self._active(spec.name, window)
        latency = spec.base_latency_ms
        if "latency-degradation" in active:
            inj = active["latency-degradation"]
            latency = spec.base_latency_ms * 2.0 * INJECT_FACTOR * inj.intensity
        if "bottleneck-service" in active:
            inj = active["bottleneck-service"]
            latency = max(latency, 500.0 * INJECT_FACTOR * inj.intensity)
        return latency

    def _error_status(self, spec: ServiceSpec, window: int) -> str:
        """Bresenham-spread error statuses over all of a service's requests."""
        active = self._active(spec.name, window)
        if "fragile-service" not in active:
            return "ok"
        inj = active["fragile-service"]
        frac = min(0.5, 0.05 * 2.0 * INJECT_FACTOR * inj.intensity)
        key = (spec.name, window)
        n = self._err_counter.get(key, 0)
        self._err_counter[key] = n + 1
        return "error" if math.floor((n + 1) * frac) > math.floor(n * frac) else "ok"

    def _emit_server_span(self, spec: ServiceSpec, ts_us: int, window: int,
                          trace_id: str, parent: str | None, j: int,
                          operation: str | None = None) -> dict:
        skew = "uneven-load-distribution" in self._active(spec.name, window)
        instance = self._pick_instance(spec, skew, j)
        status = self._error_status(spec, window)
        duration_ms = _jitter(self.rng, self._server_latency_ms(spec, window))
        if operation is None:
            eps = spec.endpoints
            operation = eps[j % len(eps)]["path"] if eps else "/"
        record = {
            "trace_id": trace_id,
            "span_id": self._next_id(),
            "parent_span_id": parent,
            "service": spec.name,
            "instance": instance,
            "operation": operation,
            "kind": "server",
            "start_us": ts_us,
            "duration_us": int(duration_ms * 1000),
            "status": status,
        }
        self.sink.span(record)
        return record

    def _emit_db_spans(self, server: dict, count: int) -> None:
        for q in range(count):
            self.sink.span({
                "trace_id": server["trace_id"],
                "span_id": self._next_id(),
                "parent_span_id": server["span_id"],
                "service": server["service"],
                "instance": server["instance"],
                "operation": "db.query",
                "kind": "db",
                "start_us": server["start_us"] + 300 + q * 50,
                "duration_us": int(_jitter(self.rng, 2.0) * 1000),
                "status": "ok",
                "db_statement_kind": "select",
            })

    def _emit_client_call(self, caller: ServiceSpec, target: ServiceSpec,
                          parent: dict, ts_us: int, window: int, j: int) -> None:
        client = {
            "trace_id": parent["trace_id"],
            "span_id": self._next_id(),
            "parent_span_id": parent["span_id"],
            "service": caller.name,
            "instance": parent["instance"],
            "operation": f"call {target.name}",
            "kind": "client",
            "start_us": ts_us,
            "duration_us": int(_jitter(self.rng, 5.0) * 1000),
            "status": "ok",
            "peer_service": target.name,
        }
        self.sink.span(client)
        server = self._emit_server_span(
            target, min(ts_us + 500, self._window_end(window) - 1000),
            window, client["trace_id"], client["span_id"], j)
        self._emit_db_spans(server, self._sql_count(target, window))

    def _sql_count(self, spec: ServiceSpec, window: int) -> int:
        active = self._active(spec.name, window)
        if "n-plus-one-query" in active:
            inj = active["n-plus-one-query"]
            return math.ceil(10 * 1.2 * inj.intensity)
        return spec.sql_per_request

    def _window_end(self, window: int) -> int:
        return self.scenario.start_us + (window + 1) * self.window_us

    def _chain_trace(self, target: ServiceSpec, ts_us: int, window: int,
                     depth_spans: int) -> None:
        """A deep call chain ending at `target`: server/client alternating."""
        hops = (depth_spans - 1) // 2  # client+server pairs after the root
        others = [s for s in self.specs if s.name != target.name and s.baseline_rps > 0]
        if not others:
            others = [target]
        path = [others[i % len(others)] for i in range(hops)] + [target]
        trace_id = self._trace_id()
        parent = self._emit_server_span(path[0], ts_us, window, trace_id, None, 0)
        t = ts_us
        for caller, callee in zip(path, path[1:]):
            t = min(t + 400, self._window_end(window) - 1000)
            client = {
                "trace_id": trace_id,
                "span_id": self._next_id(),
                "parent_span_id": parent["span_id"],
                "service": caller.name,
                "instance": parent["instance"],
                "operation": f"call {callee.name}",
                "kind": "client",
                "start_us": t,
                "duration_us": int(_jitter(self.rng, 5.0) * 1000),
                "status": "ok",
                "peer_service": callee.name,
            }
            self.sink.span(client)
            t = min(t + 400, self._window_end(window) - 1000)
            parent = self._emit_server_span(
                callee, t, window, trace_id, client["span_id"], 0)

    def _emit_window_spans(self, spec: ServiceSpec, window: int) -> int:
        scenario = self.scenario
        wstart = scenario.start_us + window * self.window_us
        active = self._active(spec.name, window)

        roots = round(spec.baseline_rps * scenario.window_s)
        if roots > 0:
            roots = max(1, round(_jitter(self.rng, roots)))

        # Redirect this service's fanout when some other target is being
        # turned into a bottleneck in this window.
        redirect_to = None
        for inj in scenario.injections:
            if (inj.smell_id == "bottleneck-service" and inj.service != spec.name
                    and inj.window_range[0] <= window < inj.window_range[1]):
                redirect_to = self.by_name[inj.service]

        dep_targets = [
            self.by_name[d["target"]] for d in spec.dependencies
            if "://" not in d["target"] and d.get("via") != "db" and d["target"] in self.by_name
        ]
        chatty_calls = 0
        if "chatty-service" in active and dep_targets:
            inj = active["chatty-service"]
            chatty_calls = math.ceil(5 * 1.2 * inj.intensity)

        for j in range(roots):
            ts = wstart + (j * self.window_us) // max(roots, 1) + 1000
            trace_id = self._trace_id()
            root = self._emit_server_span(spec, ts, window, trace_id, None, j)
            self._emit_db_spans(root, self._sql_count(spec, window))

            targets = [redirect_to] * len(dep_targets) if redirect_to else dep_targets
            for d_idx, target in enumerate(targets):
                calls = chatty_calls if (chatty_calls and d_idx == 0) else 1
                for c in range(calls):
                    call_ts = min(ts + 1000 + c * 200 + d_idx * 100,
                                  self._window_end(window) - 2000)
                    self._emit_client_call(spec, target, root, call_ts, window, j * calls + c)

        if "long-call-chain-runtime" in active:
            inj = active["long-call-chain-runtime"]
            depth = math.ceil(5 * 1.2 * inj.intensity) + 1
            for k in range(max(6, roots // 10)):
                ts = wstart + (k * self.window_us) // max(roots // 10, 6) + 5000
                self._chain_trace(spec, ts, window, depth)
        return roots

    def _emit_window_metrics(self, spec: ServiceSpec, window: int) -> None:
        scenario = self.scenario
        wstart = scenario.start_us + window * self.window_us
        active = self._active(spec.name, window)
        samples = self.window_us // self.interval_us

        jitter_inj = None
        for inj in scenario.injections:
            if (inj.smell_id == "memory-jitter" and inj.service == spec.name
                    and inj.window_range[0] <= window < inj.window_range[1]):
                jitter_inj = inj

        cpu_base = spec.cpu_baseline
        if "cpu-saturation" in active:
            cpu_base = 0.98

        gc_per_sample = None
        if "frequent-gc" in active:
            inj = active["frequent-gc"]
            gc_per_sample = math.ceil(1.0 * INJECT_FACTOR * inj.intensity
                                      * scenario.report_interval_s)

        heap_flat = int(0.4 * spec.heap_max_bytes)
        for i in range(spec.instances):
            instance = f"{spec.name}-{i}"
            for k in range(samples):
                ts = wstart + k * self.interval_us + self.interval_us // 2
                cpu = min(1.0, max(0.0, _jitter(self.rng, cpu_base, 0.02 if cpu_base > 0.9 else 0.04)))
                if jitter_inj is not None:
                    a, _b = jitter_inj.window_range
                    inj_len = jitter_inj.window_range[1] - a
                    total_growth = 0.2 * INJECT_FACTOR * jitter_inj.intensity * spec.heap_max_bytes
                    rate_per_us = total_growth / (inj_len * self.window_us)
                    elapsed = ts - (scenario.start_us + a * self.window_us)
                    heap = heap_flat + int(rate_per_us * elapsed)
                    heap = min(heap, int(0.95 * spec.heap_max_bytes))
                else:
                    heap = heap_flat
                if gc_per_sample is not None:
                    gc_delta = gc_per_sample
                else:
                    gc_delta = 1 if k % 4 == 3 else 0
                self.sink.metric({
                    "service": spec.name,
                    "instance": instance,
                    "ts_us": ts,
                    "cpu_frac": round(cpu, 6),
                    "heap_used_bytes": heap,
                    "heap_max_bytes": spec.heap_max_bytes,
                    "gc_count_delta": gc_delta,
                    "gc_pause_ms_delta": 30.0 * gc_delta,
                })

    def _emit_window_business(self, spec: ServiceSpec, window: int, roots: int) -> None:
        if not spec.business_methods or roots <= 0:
            return
        scenario = self.scenario
        wstart = scenario.start_us + window * self.window_us
        active = self._active(spec.name, window)
        samples = self.window_us // self.interval_us

        total = roots
        if "call-rate-anomaly" in active:
            # The ratio divides two independently jittered window totals, so
            # the slack is wider than INJECT_FACTOR to absorb both draws.
            inj = active["call-rate-anomaly"]
            total = math.ceil(roots * 3.0 * 1.5 * inj.intensity)

        methods = spec.business_methods
        if "uneven-api-usage" in active and len(methods) >= 2:
            weights = [0.98] + [0.02 / (len(methods) - 1)] * (len(methods) - 1)
        else:
            weights = [1.0 / len(methods)] * len(methods)
        per_method = _split_exact(total, weights)

        for m_idx, method in enumerate(methods):
            per_instance = _split_exact(per_method[m_idx], [1.0 / spec.instances] * spec.instances)
            for i in range(spec.instances):
                instance = f"{spec.name}-{i}"
                counts = _split_exact(per_instance[i], [1.0 / samples] * samples)
                for k in range(samples):
                    if counts[k] == 0:
                        continue
                    self.sink.business({
                        "service": spec.name,
                        "instance": instance,
                        "method": method,
                        "ts_us": wstart + k * self.interval_us + self.interval_us // 2,
                        "call_count_delta": counts[k],
                        "error_count_delta": 0,
                        "latency_sum_ms_delta": round(counts[k] * spec.base_latency_ms, 3),
                    })

    def run(self) -> tuple[list[dict], list[dict]]:
        manifests = [_to_manifest(s) for s in self.specs]
        for window in range(self.scenario.n_windows):
            for spec in self.specs:
                roots = self._emit_window_spans(spec, window)
                self._emit_window_metrics(spec, window)
                self._emit_window_business(spec, window, roots)
        return manifests, self.sink.ordered()


def generate(scenario: Scenario, catalog: Catalog | None = None) -> dict:
    """Render a scenario into manifests plus time-ordered telemetry batches."""
    manifests, batches = _Generator(scenario, catalog).run()
    return {"manifests": manifests, "batches": batches}


def replay(batches: list[dict], ingest=None, url: str | None = None,
           speed: float | None = None, max_retries: int = 3) -> dict:
    """Deliver batches in order to a direct ingest object or an HTTP target."""
    if ingest is None and url is None:
        raise ValueError("replay needs either a direct ingest or a target url")
    sent = accepted = rejected = 0
    session = None
    if url is not None:
        import requests
        session = requests.Session()
    prev_ts: int | None = None
    for batch in batches:
        ts_candidates = (
            [s["start_us"] for s in batch["spans"]]
            + [m["ts_us"] for m in batch["metrics"]]
            + [b["ts_us"] for b in batch["business"]]
        )
        batch_ts = min(ts_candidates) if ts_candidates else None
        if speed and prev_ts is not None and batch_ts is not None and batch_ts > prev_ts:
            time.sleep((batch_ts - prev_ts) / 1e6 / speed)
        prev_ts = batch_ts if batch_ts is not None else prev_ts

        if ingest is not None:
            receipt = ingest.ingest_batch(batch).to_dict()
        else:
            receipt = _post_with_retries(session, url.rstrip("/") + "/ingest",
                                         batch, max_retries)
        sent += 1
        accepted += int(receipt.get("accepted", 0))
        rejected += len(receipt.get("rejected", []))
    return {"sent": sent, "accepted": accepted, "rejected": rejected}


def _post_with_retries(session, url: str, batch: dict, max_retries: int) -> dict:
    import requests
    last_error = None
    for attempt in range(max_retries):
        try:
            response = session.post(url, json=batch, timeout=10)
            response.raise_for_status()
            return response.json()
        except requests.RequestException as exc:
            last_error = exc
            time.sleep(0.2 * (attempt + 1))
    raise ReplayError(f"target {url} unreachable after {max_retries} attempts: {last_error}")
