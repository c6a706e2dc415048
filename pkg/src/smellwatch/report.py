"""Offline report rendering: the detection card as a two-ring pie and the
history view as a timeline grid, written to files next to the delimited
record export.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .catalog import Catalog
from .results import DetectionCardSummary, HistoryTimeline, ResultStore

PRIMARY_COLORS = {
    "Architecture": "#4c72b0",
    "Runtime": "#dd8452",
    "Performance": "#55a868",
    "Unknown": "#8c8c8c",
}
DETECTED_COLOR = "#c44e52"
CLEAR_COLOR = "#a8d5a2"


def render_detection_card(summary: DetectionCardSummary, path: str | Path) -> Path:
    """Two-ring pie: inner ring taxonomy shares, outer ring detected/not
    per smell, plus the executed/positive header."""
    fig, ax = plt.subplots(figsize=(7, 7))
    ax.set_title(
        f"{summary.executed} detections / {summary.positive} with smells",
        fontsize=14)

    if summary.inner_ring:
        inner_sizes = [seg["fraction"] for seg in summary.inner_ring]
        inner_labels = [f'{seg["primary_type"]}\n{seg["secondary_type"]}'
                        for seg in summary.inner_ring]
        inner_colors = [PRIMARY_COLORS.get(seg["primary_type"], "#8c8c8c")
                        for seg in summary.inner_ring]
        ax.pie(inner_sizes, radius=0.72, labels=inner_labels, colors=inner_colors,
               labeldistance=0.55, textprops={"fontsize": 7},
               wedgeprops={"width": 0.40, "edgecolor": "white"})

        outer_sizes: list[float] = []
        outer_colors: list[str] = []
        n = len(summary.outer_ring)
        for seg in summary.outer_ring:
            share = 1.0 / n
            outer_sizes.append(seg["detected_fraction"] * share)
            outer_colors.append(DETECTED_COLOR)
            outer_sizes.append(seg["not_detected_fraction"] * share)
            outer_colors.append(CLEAR_COLOR)
        ax.pie(outer_sizes, radius=1.0, colors=outer_colors,
               wedgeprops={"width": 0.26, "edgecolor": "white"})
    else:
        ax.text(0.5, 0.5, "no detections in range", ha="center", va="center",
                transform=ax.transAxes, fontsize=12, color="#666666")

    ax.set(aspect="equal")
    path = Path(path)
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)
    return path


def render_history(timeline: HistoryTimeline, path: str | Path) -> Path:
    """One column per window, one badge per (service, smell) detection."""
    windows = timeline.windows
    services = sorted({d["service"] for w in windows for d in w["detections"]})
    fig_width = max(6.0, 0.6 * len(windows) + 2)
    fig_height = max(3.0, 0.7 * len(services) + 1.5)
    fig, ax = plt.subplots(figsize=(fig_width, fig_height))

    for x, entry in enumerate(windows):
        for det in entry["detections"]:
            y = services.index(det["service"])
            ax.scatter(x, y, s=140, color=DETECTED_COLOR, zorder=3)
            ax.annotate(str(len(det["smell_ids"])), (x, y), ha="center", va="center",
                        fontsize=8, color="white", zorder=4)

    ax.set_xticks(range(len(windows)))
    ax.set_xticklabels([str(i) for i in range(len(windows))], fontsize=7)
    ax.set_yticks(range(len(services)))
    ax.set_yticklabels(services, fontsize=8)
    ax.set_xlabel("window")
    ax.set_title("detected smells per window")
    ax.set_xlim(-0.5, max(len(windows) - 0.5, 0.5))
    ax.set_ylim(-0.5, max(len(services) - 0.5, 0.5))
    ax.grid(True, linestyle=":", alpha=0.5, zorder=0)
    path = Path(path)
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)
    return path


def write_records_csv(records: list, path: str | Path) -> Path:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["window_start_us", "scope", "smell_id", "detected",
                         "metric_value", "comparator", "threshold", "run_id"])
        for record in records:
            writer.writerow([
                record.window.get("start_us", ""), record.scope, record.smell_id,
                record.detected, record.metric_value, record.comparator,
                record.threshold, record.run_id,
            ])
    return path


def write_report(results: ResultStore, catalog: Catalog, from_us: int, to_us: int,
                 out_dir: str | Path) -> dict[str, str]:
    """Render card + history figures and dump records/summary next to them."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    summary = results.query_summary(from_us, to_us, catalog)
    timeline = results.query_history(None, from_us, to_us)
    records = results.records(from_us, to_us)

    paths = {
        "detection_card": str(render_detection_card(summary, out / "detection_card.png")),
        "history": str(render_history(timeline, out / "history.png")),
        "records_csv": str(write_records_csv(records, out / "records.csv")),
        "summary_json": str(out / "summary.json"),
    }
    (out / "summary.json").write_text(
        json.dumps({"from_us": from_us, "to_us": to_us, **summary.to_dict()}, indent=2),
        encoding="utf-8")
    return paths
