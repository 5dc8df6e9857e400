"""Output files: staleness/cycle/loss CSVs and ``key: value`` summaries.

Every file is written to a temporary sibling and renamed into place, so an
interrupted run never leaves a truncated file behind.
"""

from __future__ import annotations

import csv
import os
import tempfile
from contextlib import contextmanager
from pathlib import Path

STALENESS_COLUMNS = ("client_id", "event_index", "sim_time", "staleness")
CYCLE_COLUMNS = ("edge_id", "cycle_index", "cycle_duration")
LOSS_COLUMNS = ("cloud_version", "sim_time", "loss", "grad_norm_sq")


@contextmanager
def atomic_open(path: str | Path, mode: str = "w"):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, mode, newline="" if "b" not in mode else None) as fh:
            yield fh
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_rows(path, header, rows) -> None:
    with atomic_open(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])


def write_staleness_csv(path, trace) -> None:
    _write_rows(path, STALENESS_COLUMNS, trace.rows())


def write_cycles_csv(path, timing_run) -> None:
    rows = zip(
        timing_run.cycle_edge.tolist(),
        timing_run.cycle_index.tolist(),
        timing_run.cycle_duration.tolist(),
    )
    _write_rows(path, CYCLE_COLUMNS, rows)


def write_loss_csv(path, result) -> None:
    rows = zip(
        result.versions.tolist(),
        result.times.tolist(),
        result.losses.tolist(),
        result.grad_norm_sq.tolist(),
    )
    _write_rows(path, LOSS_COLUMNS, rows)


def read_csv_columns(path) -> dict[str, list[str]]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        cols: dict[str, list[str]] = {h: [] for h in header}
        for row in reader:
            for h, v in zip(header, row):
                cols[h].append(v)
    return cols


def format_summary(record: dict) -> str:
    lines = []
    for key, value in record.items():
        if isinstance(value, float):
            value = repr(value)
        lines.append(f"{key}: {value}")
    return "\n".join(lines) + "\n"


def parse_summary(text: str) -> dict[str, str]:
    out = {}
    for line in text.splitlines():
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        key, _, value = line.partition(":")
        out[key.strip()] = value.strip()
    return out


def write_summary(path, record: dict) -> None:
    with atomic_open(path) as fh:
        fh.write(format_summary(record))


def write_text(path, text: str) -> None:
    with atomic_open(path) as fh:
        fh.write(text)
