"""Raw telemetry: wire records, per-record validation, and the ingest path.

Three categories arrive in one batch: trace spans, process resource
samples, and business invocation counters. Valid records are appended
to the raw store; invalid ones are rejected individually so a bad
sample never sinks the batch.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .store import SegmentedStore

SPAN_KINDS = ("server", "client", "db")
SPAN_STATUS = ("ok", "error")
DB_STATEMENT_KINDS = ("select", "insert", "update", "delete")

DEFAULT_LATENESS_HORIZON_US = 60_000_000


@dataclass(frozen=True)
class SpanRecord:
    trace_id: str
    span_id: str
    service: str
    instance: str
    operation: str
    kind: str
    start_us: int
    duration_us: int
    status: str
    parent_span_id: str | None = None
    peer_service: str | None = None
    db_statement_kind: str | None = None


@dataclass(frozen=True)
class MetricSample:
    service: str
    instance: str
    ts_us: int
    cpu_frac: float
    heap_used_bytes: int
    heap_max_bytes: int
    gc_count_delta: int
    gc_pause_ms_delta: float


@dataclass(frozen=True)
class BusinessSample:
    service: str
    instance: str
    method: str
    ts_us: int
    call_count_delta: int
    error_count_delta: int
    latency_sum_ms_delta: float


@dataclass
class TelemetryBatch:
    spans: list[SpanRecord] = field(default_factory=list)
    metrics: list[MetricSample] = field(default_factory=list)
    business: list[BusinessSample] = field(default_factory=list)
    producer: str = "unknown"

    def size(self) -> int:
        return len(self.spans) + len(self.metrics) + len(self.business)


@dataclass
class IngestReceipt:
    accepted: int
    rejected: list[dict]  # {"index": int, "reason": str}

    def to_dict(self) -> dict:
        return {"accepted": self.accepted, "rejected": self.rejected}


class BatchParseError(ValueError):
    """The request body does not parse as a TelemetryBatch."""


def _require(raw: dict, fields: tuple[str, ...]) -> str | None:
    missing = [f for f in fields if f not in raw or raw[f] is None]
    if missing:
        return f"missing field(s): {', '.join(missing)}"
    return None


def validate_span(raw: dict) -> str | None:
    """Return a rejection reason, or None for a valid span."""
    err = _require(raw, ("trace_id", "span_id", "service", "instance", "operation",
                         "kind", "start_us", "duration_us", "status"))
    if err:
        return err
    if raw["kind"] not in SPAN_KINDS:
        return f"kind {raw['kind']!r} not one of {SPAN_KINDS}"
    if raw["status"] not in SPAN_STATUS:
        return f"status {raw['status']!r} not one of {SPAN_STATUS}"
    try:
        duration = int(raw["duration_us"])
        int(raw["start_us"])
    except (TypeError, ValueError):
        return "start_us/duration_us not integers"
    if duration < 0:
        return "duration_us negative"
    if raw["kind"] == "client" and not raw.get("peer_service"):
        return "client span requires peer_service"
    if raw["kind"] == "db" and raw.get("db_statement_kind") not in DB_STATEMENT_KINDS:
        return f"db span requires db_statement_kind in {DB_STATEMENT_KINDS}"
    return None


def validate_metric(raw: dict) -> str | None:
    err = _require(raw, ("service", "instance", "ts_us", "cpu_frac", "heap_used_bytes",
                         "heap_max_bytes", "gc_count_delta", "gc_pause_ms_delta"))
    if err:
        return err
    try:
        cpu = float(raw["cpu_frac"])
        used = int(raw["heap_used_bytes"])
        cap = int(raw["heap_max_bytes"])
        gc_count = int(raw["gc_count_delta"])
        gc_pause = float(raw["gc_pause_ms_delta"])
    except (TypeError, ValueError):
        return "numeric field not parseable"
    if not 0.0 <= cpu <= 1.0:
        return "cpu_frac out of range"
    if used > cap:
        return "heap_used_bytes exceeds heap_max_bytes"
    if gc_count < 0 or gc_pause < 0:
        return "gc deltas must be non-negative"
    return None


def validate_business(raw: dict) -> str | None:
    err = _require(raw, ("service", "instance", "method", "ts_us", "call_count_delta",
                         "error_count_delta", "latency_sum_ms_delta"))
    if err:
        return err
    try:
        calls = int(raw["call_count_delta"])
        errors = int(raw["error_count_delta"])
        latency = float(raw["latency_sum_ms_delta"])
    except (TypeError, ValueError):
        return "numeric field not parseable"
    if calls < 0 or errors < 0 or latency < 0:
        return "deltas must be non-negative"
    if errors > calls:
        return "error_count_delta exceeds call_count_delta"
    return None


def parse_batch_body(body: dict) -> tuple[list[dict], list[dict], list[dict], str]:
    """Shape-check a request body; raises BatchParseError on whole-body problems."""
    if not isinstance(body, dict):
        raise BatchParseError("body must be a JSON object")
    spans = body.get("spans") or []
    metrics = body.get("metrics") or []
    business = body.get("business") or []
    for name, lst in (("spans", spans), ("metrics", metrics), ("business", business)):
        if not isinstance(lst, list):
            raise BatchParseError(f"{name} must be a list")
        for item in lst:
            if not isinstance(item, dict):
                raise BatchParseError(f"{name} entries must be objects")
    if not (spans or metrics or business):
        raise BatchParseError("batch must contain at least one record")
    producer = body.get("producer") or "unknown"
    return spans, metrics, business, str(producer)


class TelemetryIngest:
    """Validates batches and appends accepted records to the raw store."""

    def __init__(self, store: SegmentedStore, lateness_horizon_us: int = DEFAULT_LATENESS_HORIZON_US):
        self.store = store
        self.lateness_horizon_us = lateness_horizon_us

    def _too_late(self, category: str, ts_us: int) -> bool:
        watermark = self.store.max_ts(category)
        return watermark is not None and ts_us < watermark - self.lateness_horizon_us

    def ingest_batch(self, body: dict) -> IngestReceipt:
        spans, metrics, business, _producer = parse_batch_body(body)
        rejected: list[dict] = []
        accepted_spans: list[tuple[int, dict]] = []
        accepted_metrics: list[tuple[int, dict]] = []
        accepted_business: list[tuple[int, dict]] = []

        index = 0
        for raw in spans:
            reason = validate_span(raw)
            if reason is None and self._too_late("span", int(raw["start_us"])):
                reason = "record older than lateness horizon"
            if reason is None:
                accepted_spans.append((int(raw["start_us"]), raw))
            else:
                rejected.append({"index": index, "reason": reason})
            index += 1
        for raw in metrics:
            reason = validate_metric(raw)
            if reason is None and self._too_late("metric", int(raw["ts_us"])):
                reason = "record older than lateness horizon"
            if reason is None:
                accepted_metrics.append((int(raw["ts_us"]), raw))
            else:
                rejected.append({"index": index, "reason": reason})
            index += 1
        for raw in business:
            reason = validate_business(raw)
            if reason is None and self._too_late("business", int(raw["ts_us"])):
                reason = "record older than lateness horizon"
            if reason is None:
                accepted_business.append((int(raw["ts_us"]), raw))
            else:
                rejected.append({"index": index, "reason": reason})
            index += 1

        if accepted_spans:
            self.store.append_batch("span", accepted_spans)
        if accepted_metrics:
            self.store.append_batch("metric", accepted_metrics)
        if accepted_business:
            self.store.append_batch("business", accepted_business)

        accepted = len(accepted_spans) + len(accepted_metrics) + len(accepted_business)
        return IngestReceipt(accepted=accepted, rejected=rejected)

    def read_raw(self, category: str, from_us: int, to_us: int) -> list[dict]:
        if category not in ("span", "metric", "business"):
            raise ValueError(f"unknown raw category {category!r}")
        return self.store.read(category, from_us, to_us)
