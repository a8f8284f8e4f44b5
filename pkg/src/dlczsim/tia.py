"""Time-interval analyzer: gating, start/stop matching, delay histograms.

D1 drives the Start input and D2/D3 the two Stop inputs.  Like the
hardware, each start is closed by the first stop that arrives at or after
it; the resulting pair is kept only if its delay lies in the coincidence
window.  Windows are half-open, ``lo <= delay < hi``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .simkernel import TIME_RESOLUTION_NS, Channel, EventStream, PulseSchedule


@dataclass(frozen=True)
class CoincidenceWindow:
    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError(f"window needs lo < hi, got ({self.lo}, {self.hi})")
        if self.lo < 0:
            raise ValueError("a start/stop analyzer cannot see stops before the start (lo < 0)")

    def contains(self, delay):
        delay = np.asarray(delay)
        return (delay >= self.lo) & (delay < self.hi)

    @property
    def width(self) -> float:
        return self.hi - self.lo

    @property
    def center(self) -> float:
        return (self.lo + self.hi) / 2


# windows used for the two storage delays of the experiment
REFERENCE_WINDOWS = {100: CoincidenceWindow(0, 80), 200: CoincidenceWindow(25, 145)}


def reference_window(delta_t: float) -> CoincidenceWindow:
    try:
        return REFERENCE_WINDOWS[int(round(delta_t))]
    except KeyError:
        raise ValueError(f"no published coincidence window for delta_t={delta_t} ns") from None


@dataclass(frozen=True)
class CoincidenceEvent:
    trial_index: int
    start_time: int
    stop_channel: Channel
    stop_time: int

    @property
    def delay(self) -> int:
        return self.stop_time - self.start_time


class CoincidenceList(Sequence[CoincidenceEvent]):
    """Array-backed list of matched start/stop pairs, one per trial at most."""

    __slots__ = ("trial", "start", "stop_channel", "stop")

    def __init__(self, trial=(), start=(), stop_channel=(), stop=()):
        self.trial = np.array(trial, dtype=np.int64).ravel()
        self.start = np.array(start, dtype=np.int64).ravel()
        self.stop_channel = np.array(stop_channel, dtype=np.uint8).ravel()
        self.stop = np.array(stop, dtype=np.int64).ravel()
        if not (self.trial.size == self.start.size == self.stop_channel.size == self.stop.size):
            raise ValueError("coincidence arrays differ in length")

    @property
    def delay(self) -> np.ndarray:
        return self.stop - self.start

    def __len__(self) -> int:
        return self.trial.size

    def __getitem__(self, idx):
        if isinstance(idx, slice):
            return self.select(np.arange(len(self))[idx])
        return CoincidenceEvent(
            int(self.trial[idx]), int(self.start[idx]), Channel(int(self.stop_channel[idx])), int(self.stop[idx])
        )

    def __iter__(self) -> Iterator[CoincidenceEvent]:
        for e in zip(self.trial.tolist(), self.start.tolist(), self.stop_channel.tolist(), self.stop.tolist()):
            yield CoincidenceEvent(e[0], e[1], Channel(e[2]), e[3])

    def __eq__(self, other) -> bool:
        if not isinstance(other, CoincidenceList):
            return NotImplemented
        return all(
            np.array_equal(getattr(self, f), getattr(other, f)) for f in ("trial", "start", "stop_channel", "stop")
        )

    def __repr__(self) -> str:
        return f"CoincidenceList({len(self)} pairs)"

    def select(self, mask) -> "CoincidenceList":
        return CoincidenceList(self.trial[mask], self.start[mask], self.stop_channel[mask], self.stop[mask])

    def in_window(self, window: CoincidenceWindow) -> "CoincidenceList":
        return self.select(window.contains(self.delay))

    def count(self, channel: Channel) -> int:
        return int(np.count_nonzero(self.stop_channel == channel))


def gate(events: EventStream, sched: PulseSchedule) -> EventStream:
    """Keep D1 clicks inside the signal gate and D2/D3 clicks inside the idler gate."""
    sig_lo, sig_hi = sched.signal_window
    idl_lo, idl_hi = sched.idler_window
    is_start = events.channel == Channel.D1
    t = events.time
    keep = np.where(is_start, (t >= sig_lo) & (t < sig_hi), (t >= idl_lo) & (t < idl_hi))
    return events.select(keep)


def match_coincidences(events: EventStream, window: CoincidenceWindow) -> CoincidenceList:
    """Pair each trial's start with the first stop at or after it, if in ``window``.

    Simultaneous D2 and D3 stops resolve to D2.  If a trial carries more than
    one D1 click the earliest one is the start.  Requires trial-complete input.
    """
    starts = events.select(events.channel == Channel.D1)
    if len(starts) == 0:
        return CoincidenceList()
    # events are sorted by (trial, channel, time): first D1 per trial is the earliest
    s_trial, first = np.unique(starts.trial, return_index=True)
    s_time = starts.time[first]

    stops = events.select(events.channel != Channel.D1)
    pos = np.searchsorted(s_trial, stops.trial)
    pos_c = np.minimum(pos, s_trial.size - 1)
    has_start = s_trial[pos_c] == stops.trial
    start_t = s_time[pos_c]
    ok = has_start & (stops.time >= start_t)
    trial = stops.trial[ok]
    stop_t = stops.time[ok]
    chan = stops.channel[ok]
    start_t = start_t[ok]
    order = np.lexsort((chan, stop_t, trial))
    trial, stop_t, chan, start_t = trial[order], stop_t[order], chan[order], start_t[order]
    _, first_stop = np.unique(trial, return_index=True)
    out = CoincidenceList(trial[first_stop], start_t[first_stop], chan[first_stop], stop_t[first_stop])
    return out.in_window(window)


def histogram(events, bin_ns: int = TIME_RESOLUTION_NS) -> dict[int, int]:
    """Counts per delay bin ``[k bin_ns, (k + 1) bin_ns)``, keyed by the bin's left edge."""
    if bin_ns < TIME_RESOLUTION_NS or bin_ns % TIME_RESOLUTION_NS:
        raise ValueError(f"bin width must be a positive multiple of {TIME_RESOLUTION_NS} ns, got {bin_ns}")
    if isinstance(events, CoincidenceList):
        delay = events.delay
    else:
        delay = np.array([e.delay for e in events], dtype=np.int64)
    if delay.size == 0:
        return {}
    edges, counts = np.unique(np.floor_divide(delay, bin_ns) * bin_ns, return_counts=True)
    return {int(e): int(c) for e, c in zip(edges, counts)}


def split_into_quarters(window: CoincidenceWindow) -> list[CoincidenceWindow]:
    """Four contiguous equal sub-windows.

    Each quarter must be a whole number of 2 ns bins; if the width is not a
    multiple of 8 ns, ``hi`` is pushed out to the next multiple.
    """
    step = 4 * TIME_RESOLUTION_NS
    width = math.ceil(window.width / step) * step
    q = width // 4
    lo = window.lo
    return [CoincidenceWindow(lo + k * q, lo + (k + 1) * q) for k in range(4)]
