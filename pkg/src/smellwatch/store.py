"""Append-only segmented log with an in-memory (category, time) index.

One directory per category; records are JSON lines wrapped in a small
envelope carrying the record timestamp and an arrival sequence number.
Segments roll at a configurable byte size. Readers never observe a
partially appended batch: index entries are published only after the
whole batch hit the segment file.
"""

from __future__ import annotations

import json
import os
import re
import threading
from bisect import bisect_left
from pathlib import Path

_SEGMENT_RE = re.compile(r"^segment-(\d{8})\.jsonl$")

# Raw telemetry categories; other subsystems register their own (agg.*, det.*, meta.*).
RAW_CATEGORIES = ("span", "metric", "business")


class StoreError(RuntimeError):
    """The backing directory is unavailable or a segment is unreadable."""


def _safe_dirname(category: str) -> str:
    return category.replace("/", "_")


class _CategoryLog:
    def __init__(self, root: Path, category: str, segment_max_bytes: int):
        self.category = category
        self.dir = root / _safe_dirname(category)
        self.segment_max_bytes = segment_max_bytes
        self.lock = threading.Lock()
        # Parallel arrays sorted by (ts_us, seq); seq is globally increasing
        # per category so sorting by ts then seq preserves arrival order.
        self.ts: list[int] = []
        self.seq: list[int] = []
        self.records: list[dict] = []
        self.next_seq = 0
        self._fh = None
        self._fh_bytes = 0
        self._segment_no = 0
        self._load()

    def _segments(self) -> list[Path]:
        if not self.dir.is_dir():
            return []
        out = []
        for name in sorted(os.listdir(self.dir)):
            if _SEGMENT_RE.match(name):
                out.append(self.dir / name)
        return out

    def _load(self) -> None:
        rows: list[tuple[int, int, dict]] = []
        for seg in self._segments():
            match = _SEGMENT_RE.match(seg.name)
            self._segment_no = max(self._segment_no, int(match.group(1)))
            with seg.open("rb") as fh:
                for line in fh:
                    line = line.strip()
                    if not line:
                        continue
                    try:
                        env = json.loads(line)
                    except json.JSONDecodeError:
                        # Torn tail from a crashed writer; everything before it is good.
                        break
                    rows.append((int(env["ts_us"]), int(env["seq"]), env["record"]))
        rows.sort(key=lambda r: (r[0], r[1]))
        for ts, seq, record in rows:
            self.ts.append(ts)
            self.seq.append(seq)
            self.records.append(record)
            self.next_seq = max(self.next_seq, seq + 1)

    def _open_segment(self) -> None:
        if self._fh is not None and self._fh_bytes < self.segment_max_bytes:
            return
        if self._fh is not None:
            self._fh.close()
        self._segment_no += 1
        self.dir.mkdir(parents=True, exist_ok=True)
        path = self.dir / f"segment-{self._segment_no:08d}.jsonl"
        self._fh = path.open("ab")
        self._fh_bytes = path.stat().st_size

    def append_batch(self, items: list[tuple[int, dict]]) -> None:
        """Append (ts_us, record) pairs; all-or-nothing visibility."""
        if not items:
            return
        with self.lock:
            try:
                self._open_segment()
                staged = []
                for ts_us, record in items:
                    seq = self.next_seq
                    self.next_seq += 1
                    env = {"ts_us": ts_us, "seq": seq, "record": record}
                    line = json.dumps(env, separators=(",", ":")).encode("utf-8") + b"\n"
                    self._fh.write(line)
                    self._fh_bytes += len(line)
                    staged.append((ts_us, seq, record))
                self._fh.flush()
            except OSError as exc:
                raise StoreError(f"append to {self.category!r} failed: {exc}") from exc
            # Publish to the index only once everything is on disk.
            for ts_us, seq, record in staged:
                pos = bisect_left(self.ts, ts_us)
                # Advance past equal timestamps to keep arrival order stable.
                while pos < len(self.ts) and self.ts[pos] == ts_us and self.seq[pos] < seq:
                    pos += 1
                self.ts.insert(pos, ts_us)
                self.seq.insert(pos, seq)
                self.records.insert(pos, record)

    def read_range(self, from_us: int, to_us: int) -> list[dict]:
        with self.lock:
            lo = bisect_left(self.ts, from_us)
            hi = bisect_left(self.ts, to_us)
            return [dict(r) for r in self.records[lo:hi]]

    def read_all(self) -> list[dict]:
        with self.lock:
            return [dict(r) for r in self.records]

    def max_ts(self) -> int | None:
        with self.lock:
            return self.ts[-1] if self.ts else None

    def min_ts(self) -> int | None:
        with self.lock:
            return self.ts[0] if self.ts else None

    def count(self) -> int:
        with self.lock:
            return len(self.records)

    def close(self) -> None:
        with self.lock:
            if self._fh is not None:
                self._fh.close()
                self._fh = None


class SegmentedStore:
    """Multi-category append-only store rooted at a data directory."""

    DEFAULT_SEGMENT_BYTES = 8 * 1024 * 1024

    def __init__(self, data_dir: str | Path, segment_max_bytes: int = DEFAULT_SEGMENT_BYTES):
        self.root = Path(data_dir)
        try:
            self.root.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise StoreError(f"data dir {self.root} unavailable: {exc}") from exc
        self.segment_max_bytes = segment_max_bytes
        self._logs: dict[str, _CategoryLog] = {}
        self._logs_lock = threading.Lock()
        # Pick up categories persisted by an earlier process.
        for child in sorted(self.root.iterdir()) if self.root.is_dir() else []:
            if child.is_dir():
                self._log(child.name)

    def _log(self, category: str) -> _CategoryLog:
        with self._logs_lock:
            log = self._logs.get(category)
            if log is None:
                log = _CategoryLog(self.root, category, self.segment_max_bytes)
                self._logs[category] = log
            return log

    def append(self, category: str, ts_us: int, record: dict) -> None:
        self._log(category).append_batch([(ts_us, record)])

    def append_batch(self, category: str, items: list[tuple[int, dict]]) -> None:
        self._log(category).append_batch(items)

    def read(self, category: str, from_us: int, to_us: int) -> list[dict]:
        """Records with timestamp in [from_us, to_us), by timestamp then arrival."""
        if from_us > to_us:
            raise ValueError(f"inverted range: from_us={from_us} > to_us={to_us}")
        return self._log(category).read_range(from_us, to_us)

    def read_all(self, category: str) -> list[dict]:
        return self._log(category).read_all()

    def max_ts(self, category: str) -> int | None:
        return self._log(category).max_ts()

    def min_ts(self, category: str) -> int | None:
        return self._log(category).min_ts()

    def count(self, category: str) -> int:
        return self._log(category).count()

    def categories(self) -> list[str]:
        with self._logs_lock:
            return sorted(self._logs)

    def close(self) -> None:
        with self._logs_lock:
            for log in self._logs.values():
                log.close()
