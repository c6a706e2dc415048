"""Detection engine: the per-smell online/offline registry and the cycle
that joins cached static results with runtime detection over the newest
committed window.

Static results are computed once when a system model is registered and
re-stamped into each run until the model changes.
"""

from __future__ import annotations

import logging
import threading
import time
import uuid

from .aggregation import (
    CAT_SERVICE,
    Reintegrator,
    ServiceAggregate,
    WindowSpec,
    read_service_aggregates,
)
from .catalog import Catalog
from .records import DetectionRecord, DetectionRunSummary
from .results import ResultStore
from .runtime_rules import DetectionContext, RuntimeDetectionConfig, detect_runtime
from .static_analysis import StaticDetectionConfig, SystemModel, detect_static
from .store import SegmentedStore

logger = logging.getLogger(__name__)

CAT_REGISTRY = "meta.registry"


class UnknownSmellError(KeyError):
    """smell_id is not a bound catalog entry."""


class AlgorithmRegistry:
    """Per-smell online/offline switchboard, persisted as an audit log."""

    def __init__(self, store: SegmentedStore, catalog: Catalog):
        self.store = store
        self.catalog = catalog
        self._lock = threading.Lock()
        self._online = {smell_id: True for smell_id in catalog.bound_ids()}
        for event in store.read_all(CAT_REGISTRY):
            if event["smell_id"] in self._online:
                self._online[event["smell_id"]] = bool(event["online"])

    def is_online(self, smell_id: str) -> bool:
        with self._lock:
            return self._online.get(smell_id, False)

    def snapshot(self) -> dict[str, bool]:
        with self._lock:
            return dict(sorted(self._online.items()))

    def set_status(self, smell_id: str, online: bool, now_us: int | None = None) -> dict[str, bool]:
        if smell_id not in self._online:
            raise UnknownSmellError(f"unknown smell {smell_id!r}")
        ts = now_us if now_us is not None else int(time.time() * 1e6)
        with self._lock:
            self.store.append(CAT_REGISTRY, ts,
                              {"smell_id": smell_id, "online": bool(online), "ts_us": ts})
            self._online[smell_id] = bool(online)
            return dict(sorted(self._online.items()))


class DetectionEngine:
    """Runs detection cycles over committed windows; one cycle at a time."""

    def __init__(self, store: SegmentedStore, catalog: Catalog,
                 runtime_config: RuntimeDetectionConfig | None = None,
                 static_config: StaticDetectionConfig | None = None):
        self.store = store
        self.catalog = catalog
        self.runtime_config = runtime_config or RuntimeDetectionConfig()
        self.static_config = static_config or StaticDetectionConfig()
        self.registry = AlgorithmRegistry(store, catalog)
        self.results = ResultStore(store)
        self._cycle_lock = threading.Lock()
        self._model: SystemModel | None = None
        self._static_cache: list[DetectionRecord] = []

    def register_model(self, model: SystemModel | None) -> None:
        """Attach a system model; static results are cached until it changes."""
        with self._cycle_lock:
            self._model = model
            self._static_cache = (
                detect_static(model, self.static_config, self.catalog) if model else [])

    @property
    def model(self) -> SystemModel | None:
        return self._model

    def static_records(self) -> list[DetectionRecord]:
        return list(self._static_cache)

    def _committed_window_starts(self) -> list[int]:
        return sorted({int(r["window"]["start_us"]) for r in self.store.read_all(CAT_SERVICE)})

    def _build_context(self, window: WindowSpec) -> DetectionContext:
        current = [a for a in read_service_aggregates(self.store, window.start_us, window.end_us)
                   if a.window == window]
        depth = self.runtime_config.history_depth
        history_from = window.start_us - depth * window.length_us
        history: dict[str, list[ServiceAggregate]] = {}
        for agg in read_service_aggregates(self.store, history_from, window.start_us):
            history.setdefault(agg.service, []).append(agg)
        for entries in history.values():
            entries.sort(key=lambda a: a.window.start_us)
        return DetectionContext(window=window, current=current, history=history,
                                static_model=self._model, static_results=self.static_records())

    def run_detection_cycle(self, now_us: int | None = None) -> DetectionRunSummary:
        """Process the newest unprocessed committed window; no-op summary if none."""
        now_us = now_us if now_us is not None else int(time.time() * 1e6)
        with self._cycle_lock:
            committed = self._committed_window_starts()
            processed = self.results.processed_window_starts()
            pending = [s for s in committed if s not in processed]
            if not pending:
                return DetectionRunSummary(
                    run_id="", window={}, executed=False, positive=False, record_count=0)
            start = max(pending)
            sample = next(r for r in self.store.read_all(CAT_SERVICE)
                          if int(r["window"]["start_us"]) == start)
            window = WindowSpec.from_dict(sample["window"])
            run_id = f"{window.start_us}-{uuid.uuid4().hex[:12]}"

            ctx = self._build_context(window)
            records: list[DetectionRecord] = []
            for static_record in self._static_cache:
                if not self.registry.is_online(static_record.smell_id):
                    continue
                stamped = DetectionRecord.from_dict(static_record.to_dict())
                stamped.run_id = run_id
                stamped.window = window.to_dict()
                stamped.created_at_us = now_us
                records.append(stamped)
            runtime_records = detect_runtime(ctx, self.registry, self.runtime_config, self.catalog)
            for record in runtime_records:
                record.run_id = run_id
                record.created_at_us = now_us
            records.extend(runtime_records)

            summary = DetectionRunSummary(
                run_id=run_id,
                window=window.to_dict(),
                executed=True,
                positive=any(r.detected for r in records),
                record_count=len(records),
            )
            self.results.store_run(summary, records)
            logger.info("detection run %s window=%s records=%d positive=%s",
                        run_id, window.start_us, len(records), summary.positive)
            return summary

    def set_algorithm_status(self, smell_id: str, online: bool) -> dict[str, bool]:
        return self.registry.set_status(smell_id, online)


class Pipeline:
    """Store + reintegration + detection wired together over one data dir."""

    def __init__(self, store: SegmentedStore, catalog: Catalog,
                 window_us: int = 60_000_000, lateness_us: int = 60_000_000,
                 runtime_config: RuntimeDetectionConfig | None = None,
                 static_config: StaticDetectionConfig | None = None):
        self.store = store
        self.catalog = catalog
        self.reintegrator = Reintegrator(store, window_us=window_us, lateness_us=lateness_us)
        self.engine = DetectionEngine(store, catalog,
                                      runtime_config=runtime_config,
                                      static_config=static_config)
        self._last_ingest_ts: int | None = None

    def _ingest_high_ts(self) -> int | None:
        seen = [self.store.max_ts(c) for c in ("span", "metric", "business")]
        seen = [t for t in seen if t is not None]
        return max(seen) if seen else None

    def run_all_cycles(self, now_us: int, settle_aware: bool = False) -> list[DetectionRunSummary]:
        """Reintegrate closed windows, then drain detection until idle.

        With settle_aware (the background scheduler), an actively advancing
        ingest stream caps window closing at the stream's own watermark:
        only windows no accepted record can still land in (end <= max seen
        ts - lateness) are closed, so a bulk replay of historical data is
        never raced into partial or skipped windows. Once the stream idles
        for a full cycle the cap lifts and `now` closes the tail.
        """
        effective = now_us
        if settle_aware:
            current = self._ingest_high_ts()
            if current is not None and current != self._last_ingest_ts:
                effective = min(now_us, current)
            self._last_ingest_ts = current
        self.reintegrator.run_cycle(effective)
        summaries = []
        while True:
            summary = self.engine.run_detection_cycle(now_us)
            if not summary.executed:
                break
            summaries.append(summary)
        return summaries
