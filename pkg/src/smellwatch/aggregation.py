"""Window aggregation: dedup raw records, roll them up per instance and
per service, and drive the periodic reintegration cycle that turns the
raw streams into committed window aggregates.

All three raw categories land in one InstanceAggregate per (service,
instance, window): call/SQL counts and latency come from spans, CPU,
heap and GC from resource samples, per-method counters from business
samples.
"""

from __future__ import annotations

import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field

from .store import SegmentedStore

logger = logging.getLogger(__name__)

DEFAULT_WINDOW_US = 60_000_000
DEFAULT_LATENESS_US = 60_000_000

CAT_INSTANCE = "agg.instance"
CAT_SERVICE = "agg.service"
CAT_META = "meta.reintegration"


@dataclass(frozen=True)
class WindowSpec:
    start_us: int
    length_us: int = DEFAULT_WINDOW_US

    def __post_init__(self) -> None:
        if self.length_us <= 0:
            raise ValueError("window length_us must be positive")

    @property
    def end_us(self) -> int:
        return self.start_us + self.length_us

    def contains(self, ts_us: int) -> bool:
        return self.start_us <= ts_us < self.end_us

    def to_dict(self) -> dict:
        return {"start_us": self.start_us, "length_us": self.length_us}

    @classmethod
    def from_dict(cls, raw: dict) -> "WindowSpec":
        return cls(start_us=int(raw["start_us"]), length_us=int(raw["length_us"]))


@dataclass
class InstanceAggregate:
    service: str
    instance: str
    window: WindowSpec
    out_calls: dict[str, int] = field(default_factory=dict)
    in_calls: int = 0
    sql_calls: int = 0
    server_requests: int = 0
    error_requests: int = 0
    latency_p50_ms: float = 0.0
    latency_p95_ms: float = 0.0
    latency_mean_ms: float = 0.0
    cpu_mean_frac: float = 0.0
    cpu_max_frac: float = 0.0
    heap_used_start_bytes: int = 0
    heap_used_end_bytes: int = 0
    heap_slope_bytes_per_s: float = 0.0
    heap_max_bytes: int = 0
    gc_count: int = 0
    gc_pause_ms: float = 0.0
    business_calls: dict[str, dict] = field(default_factory=dict)
    max_trace_depth: int = 0
    calls_per_request_mean: float = 0.0
    # Raw server latencies (ms), kept so service-level percentiles can be
    # recomputed exactly from pooled samples instead of approximated.
    latency_samples_ms: list[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        d = self.__dict__.copy()
        d["window"] = self.window.to_dict()
        return d

    @classmethod
    def from_dict(cls, raw: dict) -> "InstanceAggregate":
        raw = dict(raw)
        raw["window"] = WindowSpec.from_dict(raw["window"])
        return cls(**raw)


@dataclass
class ServiceAggregate:
    service: str
    window: WindowSpec
    instance_count: int = 1
    load_cv: float = 0.0
    out_calls: dict[str, int] = field(default_factory=dict)
    in_calls: int = 0
    sql_calls: int = 0
    server_requests: int = 0
    error_requests: int = 0
    latency_p50_ms: float = 0.0
    latency_p95_ms: float = 0.0
    latency_mean_ms: float = 0.0
    cpu_mean_frac: float = 0.0
    cpu_max_frac: float = 0.0
    heap_used_start_bytes: int = 0
    heap_used_end_bytes: int = 0
    heap_slope_bytes_per_s: float = 0.0
    heap_max_bytes: int = 0
    gc_count: int = 0
    gc_pause_ms: float = 0.0
    business_calls: dict[str, dict] = field(default_factory=dict)
    max_trace_depth: int = 0
    calls_per_request_mean: float = 0.0

    def to_dict(self) -> dict:
        d = self.__dict__.copy()
        d["window"] = self.window.to_dict()
        return d

    @classmethod
    def from_dict(cls, raw: dict) -> "ServiceAggregate":
        raw = dict(raw)
        raw["window"] = WindowSpec.from_dict(raw["window"])
        return cls(**raw)


def record_kind(record: dict) -> str:
    if "span_id" in record:
        return "span"
    if "method" in record:
        return "business"
    return "metric"


def _dedup_key(record: dict) -> tuple:
    kind = record_kind(record)
    if kind == "span":
        return ("span", record["trace_id"], record["span_id"])
    if kind == "business":
        return ("business", record["service"], record["instance"],
                int(record["ts_us"]), record["method"])
    return ("metric", record["service"], record["instance"], int(record["ts_us"]))


def dedup(records: list[dict]) -> list[dict]:
    """Drop duplicate records, keeping the first occurrence in input order."""
    seen: set[tuple] = set()
    out = []
    for record in records:
        key = _dedup_key(record)
        if key in seen:
            continue
        seen.add(key)
        out.append(record)
    return out


def percentile(samples: list[float], p: float) -> float:
    """Nearest-rank percentile (ceil(p/100 * n)) over the samples; 0.0 when empty."""
    if not samples:
        return 0.0
    ordered = sorted(samples)
    rank = max(1, math.ceil(p / 100.0 * len(ordered)))
    return ordered[rank - 1]


def _least_squares_slope(points: list[tuple[float, float]]) -> float:
    if len(points) < 2:
        return 0.0
    n = len(points)
    mean_x = sum(x for x, _ in points) / n
    mean_y = sum(y for _, y in points) / n
    sxx = sum((x - mean_x) ** 2 for x, _ in points)
    if sxx == 0.0:
        return 0.0
    sxy = sum((x - mean_x) * (y - mean_y) for x, y in points)
    return sxy / sxx


def _span_depths(spans: list[dict]) -> dict[tuple[str, str], int]:
    """Depth of each span in its in-window parent chain (roots have depth 1)."""
    by_id = {(s["trace_id"], s["span_id"]): s for s in spans}
    depths: dict[tuple[str, str], int] = {}

    def depth_of(key: tuple[str, str]) -> int:
        if key in depths:
            return depths[key]
        chain = []
        cur = key
        while cur in by_id and cur not in depths:
            chain.append(cur)
            parent_id = by_id[cur].get("parent_span_id")
            if not parent_id:
                break
            parent = (by_id[cur]["trace_id"], parent_id)
            if parent not in by_id or parent in chain:
                break
            cur = parent
        base = depths.get(cur, 0)
        if base == 0:
            depths[chain[-1]] = 1
            base = 1
            chain.pop()
        for k in reversed(chain):
            base += 1
            depths[k] = base
        return depths[key]

    for key in by_id:
        depth_of(key)
    return depths


def aggregate_window(records: list[dict], spec: WindowSpec,
                     topology=None) -> list[InstanceAggregate]:
    """One aggregate per (service, instance) seen in the deduped records.

    Every record must fall inside the window. `topology` is accepted for
    future cross-checks but not required by any current field.
    """
    spans, metrics, business = [], [], []
    for record in records:
        kind = record_kind(record)
        ts = int(record["start_us"] if kind == "span" else record["ts_us"])
        if not spec.contains(ts):
            raise ValueError(f"record at {ts} outside window [{spec.start_us}, {spec.end_us})")
        (spans if kind == "span" else metrics if kind == "metric" else business).append(record)

    keys: set[tuple[str, str]] = set()
    for r in spans + metrics + business:
        keys.add((r["service"], r["instance"]))

    depths = _span_depths(spans)
    span_by_id = {(s["trace_id"], s["span_id"]): s for s in spans}

    by_instance: dict[tuple[str, str], dict] = {
        k: {"client": [], "server": [], "db": [], "metrics": [], "business": [], "in_calls": 0}
        for k in keys
    }
    for s in spans:
        by_instance[(s["service"], s["instance"])][s["kind"]].append(s)
        if s["kind"] == "server" and s.get("parent_span_id"):
            parent = span_by_id.get((s["trace_id"], s["parent_span_id"]))
            if parent is not None and parent["kind"] == "client" and parent["service"] != s["service"]:
                by_instance[(s["service"], s["instance"])]["in_calls"] += 1
    for m in metrics:
        by_instance[(m["service"], m["instance"])]["metrics"].append(m)
    for b in business:
        by_instance[(b["service"], b["instance"])]["business"].append(b)

    aggregates = []
    for (service, instance) in sorted(keys):
        bucket = by_instance[(service, instance)]
        agg = InstanceAggregate(service=service, instance=instance, window=spec)

        out_calls: dict[str, int] = defaultdict(int)
        for s in bucket["client"]:
            out_calls[s["peer_service"]] += 1
        agg.out_calls = dict(sorted(out_calls.items()))
        agg.in_calls = bucket["in_calls"]
        agg.sql_calls = len(bucket["db"])
        agg.server_requests = len(bucket["server"])
        agg.error_requests = sum(1 for s in bucket["server"] if s["status"] == "error")

        latencies = [s["duration_us"] / 1000.0 for s in bucket["server"]]
        agg.latency_samples_ms = sorted(latencies)
        agg.latency_p50_ms = percentile(latencies, 50)
        agg.latency_p95_ms = percentile(latencies, 95)
        agg.latency_mean_ms = sum(latencies) / len(latencies) if latencies else 0.0

        samples = sorted(bucket["metrics"], key=lambda m: int(m["ts_us"]))
        if samples:
            agg.cpu_mean_frac = sum(float(m["cpu_frac"]) for m in samples) / len(samples)
            agg.cpu_max_frac = max(float(m["cpu_frac"]) for m in samples)
            agg.heap_used_start_bytes = int(samples[0]["heap_used_bytes"])
            agg.heap_used_end_bytes = int(samples[-1]["heap_used_bytes"])
            agg.heap_max_bytes = max(int(m["heap_max_bytes"]) for m in samples)
            agg.heap_slope_bytes_per_s = _least_squares_slope(
                [((int(m["ts_us"]) - spec.start_us) / 1e6, float(m["heap_used_bytes"]))
                 for m in samples]
            )
            agg.gc_count = sum(int(m["gc_count_delta"]) for m in samples)
            agg.gc_pause_ms = sum(float(m["gc_pause_ms_delta"]) for m in samples)

        business_calls: dict[str, dict] = {}
        for b in bucket["business"]:
            entry = business_calls.setdefault(
                b["method"], {"calls": 0, "errors": 0, "latency_sum_ms": 0.0})
            entry["calls"] += int(b["call_count_delta"])
            entry["errors"] += int(b["error_count_delta"])
            entry["latency_sum_ms"] += float(b["latency_sum_ms_delta"])
        agg.business_calls = dict(sorted(business_calls.items()))

        own_spans = bucket["client"] + bucket["server"] + bucket["db"]
        agg.max_trace_depth = max(
            (depths[(s["trace_id"], s["span_id"])] for s in own_spans), default=0)
        client_count = len(bucket["client"])
        agg.calls_per_request_mean = (
            client_count / agg.server_requests if agg.server_requests else 0.0)

        aggregates.append(agg)
    return aggregates


def _weighted_mean(values: list[float], weights: list[float]) -> float:
    total = sum(weights)
    if total > 0:
        return sum(v * w for v, w in zip(values, weights)) / total
    return sum(values) / len(values) if values else 0.0


def rollup(instances: list[InstanceAggregate]) -> ServiceAggregate:
    """Service-level rollup over one service's instance aggregates."""
    if not instances:
        raise ValueError("rollup requires at least one instance aggregate")
    service = instances[0].service
    window = instances[0].window
    for agg in instances:
        if agg.service != service or agg.window != window:
            raise ValueError("rollup inputs must share service and window")

    out = ServiceAggregate(service=service, window=window, instance_count=len(instances))
    out_calls: dict[str, int] = defaultdict(int)
    business: dict[str, dict] = {}
    pooled: list[float] = []
    for agg in instances:
        for target, n in agg.out_calls.items():
            out_calls[target] += n
        for method, entry in agg.business_calls.items():
            merged = business.setdefault(method, {"calls": 0, "errors": 0, "latency_sum_ms": 0.0})
            merged["calls"] += entry["calls"]
            merged["errors"] += entry["errors"]
            merged["latency_sum_ms"] += entry["latency_sum_ms"]
        pooled.extend(agg.latency_samples_ms)
        out.in_calls += agg.in_calls
        out.sql_calls += agg.sql_calls
        out.server_requests += agg.server_requests
        out.error_requests += agg.error_requests
        out.heap_used_start_bytes += agg.heap_used_start_bytes
        out.heap_used_end_bytes += agg.heap_used_end_bytes
        out.heap_slope_bytes_per_s += agg.heap_slope_bytes_per_s
        out.heap_max_bytes += agg.heap_max_bytes
        out.gc_count += agg.gc_count
        out.gc_pause_ms += agg.gc_pause_ms
        out.cpu_max_frac = max(out.cpu_max_frac, agg.cpu_max_frac)
        out.max_trace_depth = max(out.max_trace_depth, agg.max_trace_depth)
    out.out_calls = dict(sorted(out_calls.items()))
    out.business_calls = dict(sorted(business.items()))

    weights = [float(a.server_requests) for a in instances]
    out.latency_mean_ms = _weighted_mean([a.latency_mean_ms for a in instances], weights)
    out.cpu_mean_frac = _weighted_mean([a.cpu_mean_frac for a in instances], weights)
    out.calls_per_request_mean = _weighted_mean(
        [a.calls_per_request_mean for a in instances], weights)
    out.latency_p50_ms = percentile(pooled, 50)
    out.latency_p95_ms = percentile(pooled, 95)

    requests = [float(a.server_requests) for a in instances]
    mean_req = sum(requests) / len(requests)
    if mean_req > 0:
        variance = sum((r - mean_req) ** 2 for r in requests) / len(requests)
        out.load_cv = variance ** 0.5 / mean_req
    else:
        out.load_cv = 0.0
    return out


def window_floor(ts_us: int, length_us: int) -> int:
    return (ts_us // length_us) * length_us


class Reintegrator:
    """Turns closed raw windows into committed instance/service aggregates.

    Cycle execution is expected to be mutually exclusive (the engine holds
    a lock); re-running over processed windows emits nothing new.
    """

    def __init__(self, store: SegmentedStore,
                 window_us: int = DEFAULT_WINDOW_US,
                 lateness_us: int = DEFAULT_LATENESS_US):
        self.store = store
        self.window_us = window_us
        self.lateness_us = lateness_us

    def watermark_us(self) -> int | None:
        records = self.store.read_all(CAT_META)
        if not records:
            return None
        return max(int(r["watermark_us"]) for r in records)

    def _earliest_raw_ts(self) -> int | None:
        lows = [self.store.min_ts(c) for c in ("span", "metric", "business")]
        lows = [t for t in lows if t is not None]
        return min(lows) if lows else None

    def _window_processed(self, spec: WindowSpec) -> bool:
        return bool(self.store.read(CAT_INSTANCE, spec.start_us, spec.end_us))

    def aggregate_one_window(self, spec: WindowSpec) -> list[ServiceAggregate]:
        """Aggregate and persist a single window; [] when it has no records."""
        raw: list[dict] = []
        for category in ("span", "metric", "business"):
            raw.extend(self.store.read(category, spec.start_us, spec.end_us))
        if not raw:
            return []
        deduped = dedup(raw)
        instances = aggregate_window(deduped, spec)
        by_service: dict[str, list[InstanceAggregate]] = defaultdict(list)
        for agg in instances:
            by_service[agg.service].append(agg)
        services = [rollup(group) for _, group in sorted(by_service.items())]

        self.store.append_batch(
            CAT_INSTANCE, [(spec.start_us, a.to_dict()) for a in instances])
        self.store.append_batch(
            CAT_SERVICE, [(spec.start_us, a.to_dict()) for a in services])
        return services

    def run_cycle(self, now_us: int) -> list[ServiceAggregate]:
        """Process every closed, unprocessed window up to now - lateness."""
        limit = now_us - self.lateness_us
        closed_edge = window_floor(limit, self.window_us)

        start = self.watermark_us()
        if start is None:
            earliest = self._earliest_raw_ts()
            if earliest is None:
                return []
            start = window_floor(earliest, self.window_us)
        if start >= closed_edge:
            return []

        emitted: list[ServiceAggregate] = []
        cursor = start
        while cursor + self.window_us <= closed_edge:
            spec = WindowSpec(start_us=cursor, length_us=self.window_us)
            if not self._window_processed(spec):
                emitted.extend(self.aggregate_one_window(spec))
            cursor += self.window_us

        self.store.append(CAT_META, cursor, {"watermark_us": cursor})
        return emitted


def read_service_aggregates(store: SegmentedStore, from_us: int, to_us: int) -> list[ServiceAggregate]:
    return [ServiceAggregate.from_dict(r) for r in store.read(CAT_SERVICE, from_us, to_us)]


def read_instance_aggregates(store: SegmentedStore, from_us: int, to_us: int) -> list[InstanceAggregate]:
    return [InstanceAggregate.from_dict(r) for r in store.read(CAT_INSTANCE, from_us, to_us)]
