"""Delimited-text ingest and export for passenger-flow records.

The on-disk format is a UTF-8 CSV with header
``station_id,day_index,slot_index,count``, one observed cell per row.
Stations are ordered by first appearance; cells absent from the file are
zero-filled and counted rather than interpolated, since completion is a
modeling step, not an ingest step.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

HEADER = ["station_id", "day_index", "slot_index", "count"]


@dataclass
class FlowRecord:
    """One observed (station, day, slot) count."""

    station_id: str
    day_index: int
    slot_index: int
    count: float

    def __post_init__(self):
        if self.day_index < 0 or self.slot_index < 0:
            raise ValueError("indices must be non-negative")
        if self.count < 0:
            raise ValueError("count must be non-negative")


@dataclass
class LoadReport:
    """Ingest bookkeeping: rows read, stations found, cells zero-filled."""

    n_rows: int
    n_stations: int
    missing_count: int


def _parse_row(row, line_no, n_days, n_slots):
    if len(row) != 4:
        raise ValueError(f"line {line_no}: expected 4 fields, got {len(row)}")
    sid = row[0]
    try:
        day = int(row[1])
        slot = int(row[2])
        count = float(row[3])
    except ValueError:
        raise ValueError(f"line {line_no}: malformed indices or count: {row!r}") from None
    if not 0 <= day < n_days:
        raise ValueError(f"line {line_no}: day_index {day} outside [0, {n_days})")
    if not 0 <= slot < n_slots:
        raise ValueError(f"line {line_no}: slot_index {slot} outside [0, {n_slots})")
    if count < 0:
        raise ValueError(f"line {line_no}: negative count for ({sid}, {day}, {slot})")
    return sid, day, slot, count


def ingest(path, extents):
    """Read records into a dense (stations, days, slots) tensor.

    ``extents`` declares (n_days, n_slots); the station extent is discovered.
    Returns ``(tensor, station_ids, LoadReport)``.
    """
    n_days, n_slots = (int(e) for e in extents)
    if n_days < 1 or n_slots < 1:
        raise ValueError("declared extents must be positive")

    station_ids = []
    station_row = {}
    cells = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != HEADER:
            raise ValueError(f"expected header {','.join(HEADER)!r}, got {header!r}")
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            sid, day, slot, count = _parse_row(row, line_no, n_days, n_slots)
            if sid not in station_row:
                station_row[sid] = len(station_ids)
                station_ids.append(sid)
            key = (sid, day, slot)
            if key in cells:
                raise ValueError(f"line {line_no}: duplicate record for {key}")
            cells[key] = count

    if not station_ids:
        raise ValueError("no records found")
    tensor = np.zeros((len(station_ids), n_days, n_slots))
    for (sid, day, slot), count in cells.items():
        tensor[station_row[sid], day, slot] = count
    report = LoadReport(n_rows=len(cells), n_stations=len(station_ids),
                        missing_count=tensor.size - len(cells))
    return tensor, station_ids, report


def export(path, tensor, station_ids):
    """Write every cell in canonical (station, day, slot) order.

    Counts are written with full precision so an export re-ingests to an
    equal tensor.
    """
    tensor = np.asarray(tensor, dtype=np.float64)
    if tensor.ndim != 3:
        raise ValueError("tensor must be 3-way (stations, days, slots)")
    if len(station_ids) != tensor.shape[0]:
        raise ValueError("one id per station required")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(HEADER)
        for l, sid in enumerate(station_ids):
            for day in range(tensor.shape[1]):
                for slot in range(tensor.shape[2]):
                    writer.writerow([sid, day, slot, repr(float(tensor[l, day, slot]))])
