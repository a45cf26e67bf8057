"""Latency benchmark harness: batched reads, settling removal, statistics.

A benchmark run executes N back-to-back batch reads (no pacing) and logs the
wall time of every batch in microseconds on the monotonic clock; the run is
repeated to smooth over outliers. Statistics are computed after discarding a
settling prefix (default 1500 batches, during which JIT-style warm-up effects
are expected) and use the sample standard deviation (n-1 divisor).

Sample logs archive to delimited text (one sample per line) with a
``# key: value`` metadata header block, so runs can be diffed and re-read.
"""

from __future__ import annotations

import re
import statistics
import time
from dataclasses import dataclass, field
from pathlib import Path

from .connector import ModbusConnector
from .errors import BenchmarkAborted, ModbusKitError
from .planner import BatchPlan

DEFAULT_BATCHES = 5000
DEFAULT_REPETITIONS = 3
DEFAULT_SETTLE = 1500

# stop a run once more than this share of its batches failed
FAILURE_RATIO_LIMIT = 0.10

_LOG_MAGIC = "# modbuskit sample log v1"


@dataclass(frozen=True)
class BatchSample:
    index: int
    start_us: int
    duration_us: int


@dataclass
class SampleLog:
    """Per-batch timings for one repetition, plus run metadata."""

    subject: str
    endpoint: str
    batch_fields: int
    spans: int
    repetition: int
    samples: list[BatchSample] = field(default_factory=list)
    failures: list[tuple[int, str]] = field(default_factory=list)


@dataclass(frozen=True)
class BenchStats:
    """Summary of retained batch durations, all in microseconds."""

    min_us: float
    avg_us: float
    median_us: float
    max_us: float
    stddev_us: float
    count: int
    settle_removed: int


def run_benchmark(
    connector: ModbusConnector,
    plan: BatchPlan,
    batches: int = DEFAULT_BATCHES,
    repetitions: int = DEFAULT_REPETITIONS,
    *,
    subject: str | None = None,
    archive_dir: str | Path | None = None,
) -> list[SampleLog]:
    """Run ``repetitions`` steps of ``batches`` reads each, one log per step.

    Failed batches are recorded (and excluded from later stats); a run aborts
    once more than 10% of its batches have failed. When ``archive_dir`` is
    given, each log is written there before the function returns.
    """
    if batches < 1:
        raise ValueError(f"batches must be >= 1, got {batches}")
    if repetitions < 1:
        raise ValueError(f"repetitions must be >= 1, got {repetitions}")
    if subject is None:
        subject = plan.model.device or "bench"
    logs: list[SampleLog] = []
    for repetition in range(repetitions):
        log = SampleLog(
            subject=subject,
            endpoint=plan.model.endpoint,
            batch_fields=plan.field_count,
            spans=len(plan.spans),
            repetition=repetition,
        )
        for index in range(batches):
            start_ns = time.perf_counter_ns()
            try:
                connector.read_batch(plan)
            except ModbusKitError as exc:
                log.failures.append((index, f"{type(exc).__name__}: {exc}"))
                if len(log.failures) > FAILURE_RATIO_LIMIT * batches:
                    raise BenchmarkAborted(
                        f"{len(log.failures)} of {index + 1} batches failed in "
                        f"repetition {repetition} (limit {FAILURE_RATIO_LIMIT:.0%} "
                        f"of {batches}); last: {log.failures[-1][1]}"
                    ) from exc
                continue
            duration_us = (time.perf_counter_ns() - start_ns) // 1000
            log.samples.append(BatchSample(index, start_ns // 1000, duration_us))
        if archive_dir is not None:
            write_log(log, Path(archive_dir) / log_filename(log))
        logs.append(log)
    return logs


def compute_stats(log: SampleLog, settle: int = DEFAULT_SETTLE) -> BenchStats:
    """Stats over samples with batch index >= ``settle``.

    Median of an even count is the mean of the two middle values; the
    standard deviation uses the n-1 divisor (0 for a single sample).
    """
    if settle >= len(log.samples):
        raise ValueError(
            f"settle {settle} must be smaller than the sample count {len(log.samples)}"
        )
    retained = [s.duration_us for s in log.samples if s.index >= settle]
    if not retained:
        raise ValueError(f"no samples at or after batch index {settle}")
    return BenchStats(
        min_us=float(min(retained)),
        avg_us=statistics.fmean(retained),
        median_us=float(statistics.median(retained)),
        max_us=float(max(retained)),
        stddev_us=statistics.stdev(retained) if len(retained) > 1 else 0.0,
        count=len(retained),
        settle_removed=len(log.samples) - len(retained),
    )


# --- log archive format --------------------------------------------------------


def log_filename(log: SampleLog) -> str:
    return f"{slugify(log.subject)}-rep{log.repetition}.log"


def slugify(text: str) -> str:
    slug = re.sub(r"[^A-Za-z0-9._-]+", "-", text).strip("-")
    return slug or "bench"


def format_log(log: SampleLog) -> str:
    lines = [
        _LOG_MAGIC,
        f"# subject: {log.subject}",
        f"# endpoint: {log.endpoint}",
        f"# batch_fields: {log.batch_fields}",
        f"# spans: {log.spans}",
        f"# repetition: {log.repetition}",
        f"# failures: {len(log.failures)}",
    ]
    lines += [f"# failed: {index} {message}" for index, message in log.failures]
    lines.append("batch_index,start_us,duration_us")
    lines += [f"{s.index},{s.start_us},{s.duration_us}" for s in log.samples]
    return "\n".join(lines) + "\n"


def parse_log(text: str) -> SampleLog:
    lines = text.splitlines()
    if not lines or lines[0] != _LOG_MAGIC:
        raise ValueError("not a modbuskit sample log")
    meta: dict[str, str] = {}
    failures: list[tuple[int, str]] = []
    body_at = None
    for at, line in enumerate(lines[1:], start=1):
        if line.startswith("# failed: "):
            index_text, _, message = line[len("# failed: ") :].partition(" ")
            failures.append((int(index_text), message))
        elif line.startswith("# "):
            key, _, value = line[2:].partition(": ")
            meta[key] = value
        else:
            body_at = at
            break
    if body_at is None or lines[body_at] != "batch_index,start_us,duration_us":
        raise ValueError("sample log has no column header")
    log = SampleLog(
        subject=meta.get("subject", ""),
        endpoint=meta.get("endpoint", ""),
        batch_fields=int(meta.get("batch_fields", 0)),
        spans=int(meta.get("spans", 0)),
        repetition=int(meta.get("repetition", 0)),
        failures=failures,
    )
    for line in lines[body_at + 1 :]:
        if not line.strip():
            continue
        index, start_us, duration_us = line.split(",")
        log.samples.append(BatchSample(int(index), int(start_us), int(duration_us)))
    return log


def write_log(log: SampleLog, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(format_log(log), encoding="utf-8")
    return path


def read_log(path: str | Path) -> SampleLog:
    return parse_log(Path(path).read_text(encoding="utf-8"))
