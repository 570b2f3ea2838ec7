"""CSV readers and writers for raw series, events and decompositions."""

from __future__ import annotations

import csv
import math
from pathlib import Path
from typing import Iterable

import numpy as np

from .decompose import Decomposition, RawSeries


def _fmt(v: float) -> str:
    return "" if not math.isfinite(v) else repr(float(v))


def _open_csv(path: Path, expected: list[str]):
    fh = path.open(newline="")
    reader = csv.reader(fh)
    header = next(reader, None)
    if header is None or [h.strip() for h in header[: len(expected)]] != expected:
        fh.close()
        raise ValueError(f"{path}:1: header must start with {','.join(expected)}")
    return fh, reader


def read_series_csv(path) -> dict:
    """Long-format ``unit_id,calendar_index,value``; empty or ``nan`` values are missing."""
    path = Path(path)
    out: dict = {}
    fh, reader = _open_csv(path, ["unit_id", "calendar_index", "value"])
    with fh:
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != 3:
                raise ValueError(f"{path}:{lineno}: expected 3 fields, got {len(rec)}")
            try:
                idx = int(rec[1])
                val = float(rec[2]) if rec[2].strip() else float("nan")
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
            out.setdefault(rec[0], ([], []))
            out[rec[0]][0].append(idx)
            out[rec[0]][1].append(val)
    result = {}
    for uid, (idx, vals) in out.items():
        order = np.argsort(idx, kind="stable")
        idx = np.asarray(idx)[order]
        if np.any(np.diff(idx) == 0):
            raise ValueError(f"{path}: unit {uid} repeats a calendar_index")
        result[uid] = (idx, np.asarray(vals, dtype=float)[order])
    return result


def read_events_csv(path) -> dict:
    path = Path(path)
    out: dict = {}
    fh, reader = _open_csv(path, ["unit_id", "event_index"])
    with fh:
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != 2:
                raise ValueError(f"{path}:{lineno}: expected 2 fields, got {len(rec)}")
            if rec[0] in out:
                raise ValueError(f"{path}:{lineno}: duplicate unit_id {rec[0]!r}")
            try:
                out[rec[0]] = int(rec[1])
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
    return out


def load_series(series_path, events_path) -> list[RawSeries]:
    data = read_series_csv(series_path)
    events = read_events_csv(events_path)
    missing = [u for u in data if u not in events]
    if missing:
        raise ValueError(f"units without an event_index: {missing[:5]}")
    return [RawSeries(uid, idx, vals, events[uid]) for uid, (idx, vals) in data.items()]


def write_series_csv(series: Iterable[RawSeries], path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["unit_id", "calendar_index", "value"])
        for s in series:
            for i, v in zip(s.calendar_index, s.values):
                w.writerow([s.unit_id, int(i), _fmt(v)])


def write_events_csv(series: Iterable[RawSeries], path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["unit_id", "event_index"])
        for s in series:
            w.writerow([s.unit_id, int(s.event_index)])


def write_decomposition_csv(dec: Decomposition, calendar_index, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["calendar_index", "observed", "trend", "seasonal", "remainder"])
        for row in zip(calendar_index, dec.observed, dec.trend, dec.seasonal, dec.remainder):
            w.writerow([int(row[0])] + [_fmt(v) for v in row[1:]])


def write_rows_csv(rows: list[dict], path, columns: list[str] | None = None) -> None:
    columns = columns or (list(rows[0]) if rows else [])
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r[c]) if isinstance(r[c], float) else r[c] for c in columns])
