"""CSV metric files (headered, comma-separated, '.' decimal)."""

from __future__ import annotations

import csv
import datetime as _dt
import io
from pathlib import Path
from typing import Sequence

METRICS_HEADER = ["experiment", "seed", "epoch", "train_loss", "dev_fer", "omega", "lr"]


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def format_rows(header: Sequence[str], rows, timestamp: bool = True) -> str:
    buf = io.StringIO()
    if timestamp:
        buf.write(f"# generated {_dt.datetime.now().isoformat(timespec='seconds')}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_cell(v) for v in row])
    return buf.getvalue()


def write_metrics(path, experiment: str, seed: int, history, timestamp: bool = True) -> Path:
    """One row per epoch; ``omega`` is empty outside twin mode."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    rows = [[experiment, seed, h.epoch, h.train_loss, h.dev_fer, h.omega, h.lr] for h in history]
    path.write_text(format_rows(METRICS_HEADER, rows, timestamp), encoding="utf-8")
    return path


def read_metrics(path) -> list[dict[str, str]]:
    lines = [ln for ln in Path(path).read_text(encoding="utf-8").splitlines() if not ln.startswith("#")]
    return list(csv.DictReader(lines))
