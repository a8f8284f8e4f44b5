"""On-disk formats for click streams and coincidence lists.

Event CSV: header ``trial_index,channel,time_ns``; channel written as
``D1``/``D2``/``D3``.

Event binary: headerless little-endian records of 13 bytes,
``u64 trial_index | u8 channel (1, 2, 3) | u32 time_ns``.

Coincidence CSV: ``trial_index,start_time,stop_channel,stop_time,delay``.
"""

from __future__ import annotations

import csv
import io
from pathlib import Path

import numpy as np

from .errors import DataFormatError
from .simkernel import Channel, EventStream
from .tia import CoincidenceList

EVENT_COLUMNS = ("trial_index", "channel", "time_ns")
COINCIDENCE_COLUMNS = ("trial_index", "start_time", "stop_channel", "stop_time", "delay")

EVENT_DTYPE = np.dtype([("trial", "<u8"), ("channel", "u1"), ("time", "<u4")])
assert EVENT_DTYPE.itemsize == 13

_CHANNEL_BY_NAME = {c.name: c for c in Channel}


def events_to_csv(events: EventStream) -> str:
    buf = io.StringIO()
    buf.write(",".join(EVENT_COLUMNS) + "\n")
    names = np.array(["", "D1", "D2", "D3"])[events.channel]
    for t, c, tm in zip(events.trial.tolist(), names.tolist(), events.time.tolist()):
        buf.write(f"{t},{c},{tm}\n")
    return buf.getvalue()


def write_events_csv(events: EventStream, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(events_to_csv(events))


def read_events_csv(path) -> EventStream:
    trial, chan, time = [], [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return EventStream()
        if tuple(h.strip() for h in header) != EVENT_COLUMNS:
            raise DataFormatError(f"{path}: line 1: expected header {','.join(EVENT_COLUMNS)}, got {','.join(header)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise DataFormatError(f"{path}: line {lineno}: expected 3 fields, got {len(row)}")
            try:
                t = int(row[0])
                tm = int(row[2])
            except ValueError:
                raise DataFormatError(f"{path}: line {lineno}: non-integer trial or time in {row!r}") from None
            name = row[1].strip()
            if name not in _CHANNEL_BY_NAME:
                raise DataFormatError(f"{path}: line {lineno}: unknown channel {name!r}")
            if t < 0:
                raise DataFormatError(f"{path}: line {lineno}: negative trial index")
            trial.append(t)
            chan.append(int(_CHANNEL_BY_NAME[name]))
            time.append(tm)
    return EventStream(trial, chan, time)


def events_to_bytes(events: EventStream) -> bytes:
    if len(events) and (events.time.min() < 0 or events.time.max() >= 2**32):
        raise DataFormatError("click times outside the u32 range cannot be stored in the binary format")
    rec = np.empty(len(events), dtype=EVENT_DTYPE)
    rec["trial"] = events.trial
    rec["channel"] = events.channel
    rec["time"] = events.time
    return rec.tobytes()


def events_from_bytes(data: bytes, source: str = "<bytes>") -> EventStream:
    if len(data) % EVENT_DTYPE.itemsize:
        raise DataFormatError(
            f"{source}: size {len(data)} is not a multiple of the {EVENT_DTYPE.itemsize}-byte record "
            f"(record {len(data) // EVENT_DTYPE.itemsize} truncated)"
        )
    rec = np.frombuffer(data, dtype=EVENT_DTYPE)
    bad = np.flatnonzero((rec["channel"] < 1) | (rec["channel"] > 3))
    if bad.size:
        raise DataFormatError(f"{source}: record {int(bad[0])}: invalid channel code {int(rec['channel'][bad[0]])}")
    return EventStream(rec["trial"].astype(np.int64), rec["channel"], rec["time"].astype(np.int64))


def write_events_bin(events: EventStream, path) -> None:
    Path(path).write_bytes(events_to_bytes(events))


def read_events_bin(path) -> EventStream:
    return events_from_bytes(Path(path).read_bytes(), str(path))


def read_events(path) -> EventStream:
    """Dispatch on suffix: ``.bin`` is binary, anything else CSV."""
    return read_events_bin(path) if str(path).endswith(".bin") else read_events_csv(path)


def write_events(events: EventStream, path) -> None:
    if str(path).endswith(".bin"):
        write_events_bin(events, path)
    else:
        write_events_csv(events, path)


def coincidences_to_csv(coinc: CoincidenceList) -> str:
    buf = io.StringIO()
    buf.write(",".join(COINCIDENCE_COLUMNS) + "\n")
    for e in coinc:
        buf.write(f"{e.trial_index},{e.start_time},{e.stop_channel.name},{e.stop_time},{e.delay}\n")
    return buf.getvalue()


def write_coincidences_csv(coinc: CoincidenceList, path) -> None:
    Path(path).write_text(coincidences_to_csv(coinc))


def read_coincidences_csv(path) -> CoincidenceList:
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return CoincidenceList()
        if tuple(h.strip() for h in header) != COINCIDENCE_COLUMNS:
            raise DataFormatError(f"{path}: line 1: unexpected header {','.join(header)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                trial, start, chan, stop, delay = row
                chan = _CHANNEL_BY_NAME[chan.strip()]
                trial, start, stop, delay = int(trial), int(start), int(stop), int(delay)
            except (ValueError, KeyError):
                raise DataFormatError(f"{path}: line {lineno}: malformed row {row!r}") from None
            if chan is Channel.D1 or delay != stop - start:
                raise DataFormatError(f"{path}: line {lineno}: inconsistent coincidence {row!r}")
            rows.append((trial, start, int(chan), stop))
    if not rows:
        return CoincidenceList()
    t, s, c, p = zip(*rows)
    return CoincidenceList(t, s, c, p)
