"""Benchmark reporting: summary table, delimited export, and figures.

The table mirrors the usual presentation of request-latency measurements:
one column per subject, rows Min/Avg/Median/Max/Stddev in microseconds,
with repetitions averaged per cell. ``emit_table`` also returns the same
numbers as machine-readable rows for the CSV export, and ``render_figures``
writes a per-subject duration timeline and histogram next to it.
"""

from __future__ import annotations

import csv
import io
from collections.abc import Mapping, Sequence
from pathlib import Path
from statistics import fmean

from .bench import BenchStats, SampleLog, slugify

STAT_ROWS = (
    ("Min", "min_us"),
    ("Avg", "avg_us"),
    ("Median", "median_us"),
    ("Max", "max_us"),
    ("Stddev", "stddev_us"),
)

CSV_COLUMNS = (
    "subject",
    "min_us",
    "avg_us",
    "median_us",
    "max_us",
    "stddev_us",
    "samples",
    "repetitions",
)


def aggregate_stats(group: Sequence[BenchStats]) -> dict:
    """Average each statistic over a subject's repetitions."""
    return {
        "min_us": fmean(s.min_us for s in group),
        "avg_us": fmean(s.avg_us for s in group),
        "median_us": fmean(s.median_us for s in group),
        "max_us": fmean(s.max_us for s in group),
        "stddev_us": fmean(s.stddev_us for s in group),
        "samples": sum(s.count for s in group),
        "repetitions": len(group),
    }


def emit_table(groups: Mapping[str, Sequence[BenchStats]]) -> tuple[str, list[dict]]:
    """Render grouped stats as (formatted table text, machine-readable rows).

    Subjects without any stats are left out of the table and noted in a
    footer line instead.
    """
    if not groups:
        raise ValueError("emit_table needs at least one stats group")
    rows: list[dict] = []
    empty: list[str] = []
    for subject, group in groups.items():
        if not group:
            empty.append(subject)
            continue
        rows.append({"subject": subject, **aggregate_stats(group)})

    header = ["[us]"] + [row["subject"] for row in rows]
    table = [header]
    for label, key in STAT_ROWS:
        table.append([label] + [f"{row[key]:.0f}" for row in rows])
    widths = [max(len(line[col]) for line in table) for col in range(len(header))]
    rendered = []
    for at, line in enumerate(table):
        cells = [line[0].ljust(widths[0])] + [
            cell.rjust(widths[col + 1]) for col, cell in enumerate(line[1:])
        ]
        rendered.append("  ".join(cells).rstrip())
        if at == 0:
            rendered.append("-" * len(rendered[0]))
    if empty:
        rendered.append(f"(no data: {', '.join(empty)})")
    return "\n".join(rendered) + "\n", rows


def rows_to_csv(rows: Sequence[dict]) -> str:
    out = io.StringIO()
    writer = csv.DictWriter(out, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({key: row.get(key, "") for key in CSV_COLUMNS})
    return out.getvalue()


def write_stats_csv(rows: Sequence[dict], out_dir: str | Path) -> Path:
    path = Path(out_dir) / "stats.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(rows_to_csv(rows), encoding="utf-8")
    return path


def render_figures(
    logs_by_subject: Mapping[str, Sequence[SampleLog]],
    out_dir: str | Path,
    settle: int = 0,
) -> list[Path]:
    """Write per-subject timeline and histogram PNGs; returns the paths."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    for subject, logs in logs_by_subject.items():
        if not logs:
            continue
        slug = slugify(subject)

        fig, ax = plt.subplots(figsize=(8, 4.5))
        for log in logs:
            ax.plot(
                [s.index for s in log.samples],
                [s.duration_us for s in log.samples],
                linewidth=0.6,
                alpha=0.8,
                label=f"rep {log.repetition}",
            )
        if settle > 0:
            ax.axvline(settle, color="black", linestyle="--", linewidth=1,
                       label=f"settle = {settle}")
        ax.set_xlabel("batch index")
        ax.set_ylabel("batch duration [us]")
        ax.set_title(subject)
        ax.legend(loc="upper right", fontsize="small")
        fig.tight_layout()
        timeline = out_dir / f"{slug}-timeline.png"
        fig.savefig(timeline, dpi=110)
        plt.close(fig)
        written.append(timeline)

        retained = [
            s.duration_us for log in logs for s in log.samples if s.index >= settle
        ]
        if retained:
            fig, ax = plt.subplots(figsize=(6, 4))
            ax.hist(retained, bins=60, color="tab:blue", alpha=0.85)
            ax.set_xlabel("batch duration [us]")
            ax.set_ylabel("batches")
            ax.set_title(f"{subject} (settling removed)" if settle else subject)
            fig.tight_layout()
            hist = out_dir / f"{slug}-hist.png"
            fig.savefig(hist, dpi=110)
            plt.close(fig)
            written.append(hist)
    return written
