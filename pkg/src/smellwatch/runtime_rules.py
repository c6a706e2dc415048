"""The twelve runtime/performance smell detectors over window aggregates.

Detectors are pure functions of the DetectionContext: the current
window's service aggregates plus per-service history. History-backed
rules report detected=false with an explicit insufficient_history
evidence entry instead of skipping, so per-cycle record counts stay
predictable.
"""

from __future__ import annotations

import statistics
from dataclasses import dataclass, field

from .aggregation import ServiceAggregate, WindowSpec
from .catalog import Catalog
from .records import DetectionRecord, make_record

RUNTIME_SMELL_IDS = (
    "chatty-service",
    "bottleneck-service",
    "uneven-load-distribution",
    "fragile-service",
    "latency-degradation",
    "n-plus-one-query",
    "frequent-gc",
    "memory-jitter",
    "cpu-saturation",
    "call-rate-anomaly",
    "uneven-api-usage",
    "long-call-chain-runtime",
)

#: Parameters each detector reads from its catalog entry.
REQUIRED_PARAMS = {
    "chatty-service": ("chatty_min_ratio",),
    "bottleneck-service": ("bottleneck_fanin_frac", "bottleneck_p95_ms"),
    "uneven-load-distribution": ("load_cv_max",),
    "fragile-service": ("error_rate_max", "min_requests"),
    "latency-degradation": ("degrade_factor", "min_history"),
    "n-plus-one-query": ("nplus1_min_ratio",),
    "frequent-gc": ("gc_per_s_max", "gc_pause_frac"),
    "memory-jitter": ("leak_windows", "leak_min_frac"),
    "cpu-saturation": ("cpu_mean_max", "cpu_peak_max"),
    "call-rate-anomaly": ("spike_factor", "min_history"),
    "uneven-api-usage": ("api_skew_frac", "min_requests"),
    "long-call-chain-runtime": ("chain_depth_max",),
}


@dataclass
class DetectionContext:
    window: WindowSpec
    current: list[ServiceAggregate]
    history: dict[str, list[ServiceAggregate]] = field(default_factory=dict)
    static_model: object | None = None
    static_results: list[DetectionRecord] | None = None

    def __post_init__(self) -> None:
        for agg in self.current:
            if agg.window != self.window:
                raise ValueError(f"{agg.service}: aggregate window differs from context window")
        for service, entries in self.history.items():
            for agg in entries:
                if agg.window.start_us >= self.window.start_us:
                    raise ValueError(f"{service}: history entry does not precede the window")


@dataclass
class RuntimeDetectionConfig:
    overrides: dict[str, dict[str, float]] = field(default_factory=dict)
    min_history: int = 3
    history_depth: int = 10

    def params_for(self, catalog: Catalog, smell_id: str) -> dict[str, float]:
        entry = catalog.get_entry(smell_id)
        if entry is None:
            raise KeyError(f"catalog has no entry {smell_id!r}")
        merged = dict(entry.default_params)
        merged.update(self.overrides.get(smell_id, {}))
        return merged


def _is_online(registry, smell_id: str) -> bool:
    if hasattr(registry, "is_online"):
        return registry.is_online(smell_id)
    return bool(registry.get(smell_id, True))


def _business_total(agg: ServiceAggregate) -> int:
    return sum(entry["calls"] for entry in agg.business_calls.values())


def _insufficient(smell_id: str, agg: ServiceAggregate, threshold: float,
                  params: dict, history_len: int) -> DetectionRecord:
    return make_record(
        smell_id, agg.service, 0.0, ">=", threshold,
        {"reason": "insufficient_history", "history_windows": history_len},
        params)


def _detect_chatty(agg, ctx, params, history):
    return make_record(
        "chatty-service", agg.service, agg.calls_per_request_mean, ">=",
        params["chatty_min_ratio"],
        {"calls_per_request_mean": agg.calls_per_request_mean,
         "server_requests": agg.server_requests},
        params)


def _detect_bottleneck(agg, ctx, params, history):
    total = sum(sum(a.out_calls.values()) for a in ctx.current)
    share = agg.in_calls / total if total else 0.0
    score = min(share / params["bottleneck_fanin_frac"],
                agg.latency_p95_ms / params["bottleneck_p95_ms"])
    return make_record(
        "bottleneck-service", agg.service, score, ">=", 1.0,
        {"fanin_share": share, "in_calls": agg.in_calls,
         "total_inter_service_calls": total, "latency_p95_ms": agg.latency_p95_ms},
        params)


def _detect_uneven_load(agg, ctx, params, history):
    return make_record(
        "uneven-load-distribution", agg.service, agg.load_cv, ">=",
        params["load_cv_max"],
        {"load_cv": agg.load_cv, "instance_count": agg.instance_count},
        params)


def _detect_fragile(agg, ctx, params, history):
    error_rate = agg.error_requests / agg.server_requests if agg.server_requests else 0.0
    score = min(error_rate / params["error_rate_max"],
                agg.server_requests / params["min_requests"])
    return make_record(
        "fragile-service", agg.service, score, ">=", 1.0,
        {"error_rate": error_rate, "error_requests": agg.error_requests,
         "server_requests": agg.server_requests},
        params)


def _detect_latency_degradation(agg, ctx, params, history):
    min_history = int(params["min_history"])
    if len(history) < min_history:
        return _insufficient("latency-degradation", agg, params["degrade_factor"],
                             params, len(history))
    median = statistics.median(a.latency_p95_ms for a in history)
    denom = median if median > 0 else 1.0
    ratio = agg.latency_p95_ms / denom
    return make_record(
        "latency-degradation", agg.service, ratio, ">=", params["degrade_factor"],
        {"latency_p95_ms": agg.latency_p95_ms, "history_median_p95_ms": median,
         "history_windows": len(history)},
        params)


def _detect_nplus1(agg, ctx, params, history):
    ratio = agg.sql_calls / agg.server_requests if agg.server_requests else 0.0
    return make_record(
        "n-plus-one-query", agg.service, ratio, ">=", params["nplus1_min_ratio"],
        {"sql_calls": agg.sql_calls, "server_requests": agg.server_requests},
        params)


def _detect_frequent_gc(agg, ctx, params, history):
    window_s = agg.window.length_us / 1e6
    window_ms = agg.window.length_us / 1e3
    gc_rate = agg.gc_count / window_s
    pause_frac = agg.gc_pause_ms / window_ms
    score = max(gc_rate / params["gc_per_s_max"], pause_frac / params["gc_pause_frac"])
    return make_record(
        "frequent-gc", agg.service, score, ">=", 1.0,
        {"gc_per_s": gc_rate, "gc_pause_frac": pause_frac,
         "gc_count": agg.gc_count, "gc_pause_ms": agg.gc_pause_ms},
        params)


def _detect_memory_jitter(agg, ctx, params, history):
    min_history = int(params.get("min_history", 3))
    if len(history) < min_history:
        return _insufficient("memory-jitter", agg, 1.0, params, len(history))
    # Trailing run of time-adjacent windows with positive heap slope,
    # ending at the current window.
    run: list[ServiceAggregate] = []
    if agg.heap_slope_bytes_per_s > 0:
        run.append(agg)
        expected_start = agg.window.start_us - agg.window.length_us
        for prior in reversed(history):
            if prior.window.start_us != expected_start or prior.heap_slope_bytes_per_s <= 0:
                break
            run.append(prior)
            expected_start -= prior.window.length_us
    growth = run[0].heap_used_end_bytes - run[-1].heap_used_start_bytes if run else 0
    heap_max = agg.heap_max_bytes
    growth_component = (
        growth / (params["leak_min_frac"] * heap_max) if heap_max > 0 else 0.0)
    score = min(len(run) / params["leak_windows"], growth_component)
    return make_record(
        "memory-jitter", agg.service, score, ">=", 1.0,
        {"consecutive_growth_windows": len(run), "cumulative_growth_bytes": growth,
         "heap_max_bytes": heap_max},
        params)


def _detect_cpu_saturation(agg, ctx, params, history):
    score = max(agg.cpu_mean_frac / params["cpu_mean_max"],
                agg.cpu_max_frac / params["cpu_peak_max"])
    return make_record(
        "cpu-saturation", agg.service, score, ">=", 1.0,
        {"cpu_mean_frac": agg.cpu_mean_frac, "cpu_max_frac": agg.cpu_max_frac},
        params)


def _detect_call_rate_anomaly(agg, ctx, params, history):
    min_history = int(params["min_history"])
    if len(history) < min_history:
        return _insufficient("call-rate-anomaly", agg, params["spike_factor"],
                             params, len(history))
    totals = [_business_total(a) for a in history]
    median = statistics.median(totals)
    denom = median if median > 0 else 1.0
    ratio = _business_total(agg) / denom
    return make_record(
        "call-rate-anomaly", agg.service, ratio, ">=", params["spike_factor"],
        {"business_calls": _business_total(agg), "history_median_calls": median,
         "history_windows": len(history)},
        params)


def _detect_uneven_api_usage(agg, ctx, params, history):
    total = _business_total(agg)
    methods = agg.business_calls
    if total > 0 and methods:
        max_method, max_calls = max(methods.items(), key=lambda kv: (kv[1]["calls"], kv[0]))
        max_calls = max_calls["calls"]
        max_share = max_calls / total
    else:
        max_method, max_share = "", 0.0
    score = min(max_share / params["api_skew_frac"],
                len(methods) / 2.0,
                total / params["min_requests"])
    return make_record(
        "uneven-api-usage", agg.service, score, ">=", 1.0,
        {"max_method": max_method, "max_method_share": max_share,
         "method_count": len(methods), "business_calls": total},
        params)


def _detect_long_call_chain(agg, ctx, params, history):
    return make_record(
        "long-call-chain-runtime", agg.service, agg.max_trace_depth, ">=",
        params["chain_depth_max"],
        {"max_trace_depth": agg.max_trace_depth},
        params)


_DETECTORS = {
    "chatty-service": _detect_chatty,
    "bottleneck-service": _detect_bottleneck,
    "uneven-load-distribution": _detect_uneven_load,
    "fragile-service": _detect_fragile,
    "latency-degradation": _detect_latency_degradation,
    "n-plus-one-query": _detect_nplus1,
    "frequent-gc": _detect_frequent_gc,
    "memory-jitter": _detect_memory_jitter,
    "cpu-saturation": _detect_cpu_saturation,
    "call-rate-anomaly": _detect_call_rate_anomaly,
    "uneven-api-usage": _detect_uneven_api_usage,
    "long-call-chain-runtime": _detect_long_call_chain,
}


def detect_runtime(ctx: DetectionContext, registry, config: RuntimeDetectionConfig,
                   catalog: Catalog) -> list[DetectionRecord]:
    """One record per (online runtime smell, service in ctx.current)."""
    runtime_ids = [e.id for e in catalog.bound_entries("runtime")]
    for smell_id in runtime_ids:
        if smell_id not in _DETECTORS:
            raise KeyError(f"runtime smell {smell_id!r} has no detector implementation")

    records: list[DetectionRecord] = []
    window_dict = ctx.window.to_dict()
    for smell_id in runtime_ids:
        if not _is_online(registry, smell_id):
            continue
        params = config.params_for(catalog, smell_id)
        if smell_id in ("latency-degradation", "call-rate-anomaly", "memory-jitter"):
            params.setdefault("min_history", config.min_history)
        detector = _DETECTORS[smell_id]
        for agg in sorted(ctx.current, key=lambda a: a.service):
            history = ctx.history.get(agg.service, [])
            record = detector(agg, ctx, params, history)
            record.window = window_dict
            records.append(record)
    return records
