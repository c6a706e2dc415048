"""Persisted detection runs and the aggregate queries behind the
dashboard: card summary, two-ring distribution, per-service history.

Ring fractions are computed as exact rationals and only converted to
float at the dataclass boundary, so accounting stays recountable.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from fractions import Fraction

from .catalog import Catalog
from .records import DetectionRecord, DetectionRunSummary
from .store import SegmentedStore

CAT_RUN = "det.run"
CAT_RECORD = "det.record"


class ConflictError(RuntimeError):
    """A run with this id was already stored."""


@dataclass
class DetectionCardSummary:
    executed: int
    positive: int
    inner_ring: list[dict] = field(default_factory=list)
    outer_ring: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "executed": self.executed,
            "positive": self.positive,
            "inner_ring": self.inner_ring,
            "outer_ring": self.outer_ring,
        }


@dataclass
class HistoryTimeline:
    windows: list[dict] = field(default_factory=list)
    # each entry: {"window": {...}, "detections": [{"service": s, "smell_ids": [...]}]}

    def to_dict(self) -> dict:
        return {"windows": self.windows}


def _check_range(from_us: int, to_us: int) -> None:
    if from_us > to_us:
        raise ValueError(f"inverted range: from={from_us} > to={to_us}")


class ResultStore:
    def __init__(self, store: SegmentedStore):
        self.store = store
        self._lock = threading.Lock()
        self._run_ids = {r["run_id"] for r in store.read_all(CAT_RUN)}

    def store_run(self, summary: DetectionRunSummary, records: list[DetectionRecord]) -> str:
        for record in records:
            if record.window != summary.window:
                raise ValueError(
                    f"record {record.smell_id}@{record.scope} window differs from run window")
            if record.run_id != summary.run_id:
                raise ValueError("record run_id differs from summary run_id")
        with self._lock:
            if summary.run_id in self._run_ids:
                raise ConflictError(f"run {summary.run_id!r} already stored")
            window_start = int(summary.window["start_us"])
            # Records land before the summary so a visible run is complete.
            if records:
                self.store.append_batch(
                    CAT_RECORD, [(window_start, r.to_dict()) for r in records])
            self.store.append(CAT_RUN, window_start, summary.to_dict())
            self._run_ids.add(summary.run_id)
        return summary.run_id

    def runs(self, from_us: int, to_us: int) -> list[DetectionRunSummary]:
        _check_range(from_us, to_us)
        return [DetectionRunSummary.from_dict(r) for r in self.store.read(CAT_RUN, from_us, to_us)]

    def records(self, from_us: int, to_us: int) -> list[DetectionRecord]:
        _check_range(from_us, to_us)
        return [DetectionRecord.from_dict(r) for r in self.store.read(CAT_RECORD, from_us, to_us)]

    def processed_window_starts(self) -> set[int]:
        return {int(r["window"]["start_us"]) for r in self.store.read_all(CAT_RUN)}

    def query_summary(self, from_us: int, to_us: int, catalog: Catalog) -> DetectionCardSummary:
        _check_range(from_us, to_us)
        runs = self.runs(from_us, to_us)
        records = self.records(from_us, to_us)

        executed = len(runs)
        positive = sum(1 for r in runs if r.positive)

        per_smell: dict[str, tuple[int, int]] = {}
        for record in records:
            detected, total = per_smell.get(record.smell_id, (0, 0))
            per_smell[record.smell_id] = (detected + (1 if record.detected else 0), total + 1)

        def taxonomy(smell_id: str) -> tuple[str, str]:
            entry = catalog.get_entry(smell_id)
            if entry is None:
                return ("Unknown", "Unknown")
            return (entry.primary_type, entry.secondary_type)

        evaluated = sorted(per_smell, key=lambda sid: (taxonomy(sid), sid))
        buckets: dict[tuple[str, str], int] = {}
        for smell_id in evaluated:
            buckets[taxonomy(smell_id)] = buckets.get(taxonomy(smell_id), 0) + 1
        total_types = len(evaluated)
        inner = [
            {"primary_type": primary, "secondary_type": secondary,
             "fraction": float(Fraction(count, total_types))}
            for (primary, secondary), count in sorted(buckets.items())
        ] if total_types else []

        outer = []
        for smell_id in evaluated:
            detected, total = per_smell[smell_id]
            frac = Fraction(detected, total)
            outer.append({
                "smell_id": smell_id,
                "detected_fraction": float(frac),
                "not_detected_fraction": float(1 - frac),
            })
        return DetectionCardSummary(
            executed=executed, positive=positive, inner_ring=inner, outer_ring=outer)

    def query_history(self, service: str | None, from_us: int, to_us: int) -> HistoryTimeline:
        _check_range(from_us, to_us)
        runs = self.runs(from_us, to_us)
        records = self.records(from_us, to_us)
        by_window: dict[int, dict] = {}
        for run in sorted(runs, key=lambda r: int(r.window["start_us"])):
            start = int(run.window["start_us"])
            by_window.setdefault(start, {"window": run.window, "detections": {}})
        for record in records:
            if not record.detected:
                continue
            if service is not None and record.scope != service:
                continue
            start = int(record.window["start_us"])
            if start not in by_window:
                continue
            scoped = by_window[start]["detections"].setdefault(record.scope, [])
            if record.smell_id not in scoped:
                scoped.append(record.smell_id)
        windows = []
        for start in sorted(by_window):
            entry = by_window[start]
            windows.append({
                "window": entry["window"],
                "detections": [
                    {"service": scope, "smell_ids": sorted(ids)}
                    for scope, ids in sorted(entry["detections"].items())
                ],
            })
        return HistoryTimeline(windows=windows)

    def query_service_records(self, service: str, from_us: int, to_us: int) -> list[DetectionRecord]:
        _check_range(from_us, to_us)
        out = [r for r in self.records(from_us, to_us) if r.scope == service]
        out.sort(key=lambda r: (int(r.window["start_us"]), r.smell_id))
        return out
