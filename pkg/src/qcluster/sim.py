"""Deterministic discrete-event engine and per-board clock domains."""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Callable, Optional

from .errors import SchedulingInPast
from .timebase import CONTROL_CLOCK_HZ, as_fraction, ns, period_ticks

MAX_LANES_PER_BOARD = 4  # one per SFP+ cage


@dataclass
class ClockDomain:
    """A counter clocked against the global tick grid.

    counter_at(t) = floor((t * (1 + drift) - phase_offset) / period) + correction

    Drift is exact rational arithmetic; the common drift-free case stays on the
    pure-integer fast path. `counter_correction` is the knob synchronization
    turns: it shifts the reported count without touching the physical edges.
    """

    frequency_hz: Fraction = CONTROL_CLOCK_HZ
    phase_offset: int = 0
    drift_ppm: Fraction = Fraction(0)
    counter_correction: int = 0

    def __post_init__(self):
        self.frequency_hz = as_fraction(self.frequency_hz)
        self.drift_ppm = as_fraction(self.drift_ppm)
        self.period = period_ticks(self.frequency_hz)

    @property
    def drift_factor(self) -> Fraction:
        return 1 + self.drift_ppm / 1_000_000

    def counter_at(self, t: int) -> int:
        """Counter value read at global tick t."""
        if t < 0:
            raise ValueError(f"tick {t} is before simulation start")
        if self.drift_ppm == 0:
            return (t - self.phase_offset) // self.period + self.counter_correction
        effective = t * self.drift_factor - self.phase_offset
        return math.floor(effective / self.period) + self.counter_correction

    def time_of_counter(self, value: int) -> int:
        """First global tick at which counter_at() reaches `value`.

        May be negative when the counter passed `value` before t=0; callers
        treat that as "already in the past".
        """
        edge = self.phase_offset + (value - self.counter_correction) * self.period
        if self.drift_ppm == 0:
            return edge
        return math.ceil(Fraction(edge) / self.drift_factor)


@dataclass
class Board:
    """One FPGA board: a control clock plus its sync and fiber attachments."""

    id: int
    clock: ClockDomain = field(default_factory=ClockDomain)
    upstream: Optional[int] = None  # ring neighbor this board receives sync from
    downstream: Optional[int] = None  # ring neighbor this board forwards sync to
    lane_ids: list = field(default_factory=list)

    def attach_lane(self, lane_id: int):
        if len(self.lane_ids) >= MAX_LANES_PER_BOARD:
            raise ValueError(
                f"board {self.id} already has {MAX_LANES_PER_BOARD} lanes"
            )
        self.lane_ids.append(lane_id)


def _jsonable(value):
    # trace detail values must serialize deterministically
    if isinstance(value, Fraction):
        return int(value) if value.denominator == 1 else str(value)
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value


@dataclass
class TraceRecord:
    """One line of the run trace."""

    t_ticks: int
    kind: str
    board: Optional[int]
    detail: dict

    def as_dict(self) -> dict:
        return {
            "t_ticks": self.t_ticks,
            "t_ns": ns(self.t_ticks),
            "kind": self.kind,
            "board": self.board,
            "detail": self.detail,
        }

    def as_json(self) -> str:
        return json.dumps(self.as_dict(), separators=(",", ":"), sort_keys=False)


@dataclass
class Event:
    fire_at: int
    sequence: int
    action: Callable[[], None]
    kind: str
    board: Optional[int] = None
    detail: dict = field(default_factory=dict)


class Engine:
    """Single-threaded event engine on the integer tick grid.

    Events fire in (time, insertion order); scheduling two events at the same
    tick is legal and their relative order is their scheduling order, which
    makes whole runs reproducible bit for bit. Time never moves backwards.
    """

    def __init__(self):
        self.now: int = 0
        self.trace: list[TraceRecord] = []
        self._heap: list[tuple[int, int, Event]] = []
        self._next_seq = 0

    def schedule(self, fire_at: int, action, *, kind: str, board=None, detail=None) -> Event:
        if fire_at < self.now:
            raise SchedulingInPast(f"fire_at={fire_at} is before now={self.now}")
        event = Event(fire_at, self._next_seq, action, kind, board, dict(detail or {}))
        self._next_seq += 1
        heapq.heappush(self._heap, (event.fire_at, event.sequence, event))
        return event

    def schedule_after(self, delay: int, action, *, kind: str, board=None, detail=None) -> Event:
        return self.schedule(self.now + delay, action, kind=kind, board=board, detail=detail)

    def record(self, kind: str, board=None, **detail):
        self.trace.append(
            TraceRecord(self.now, kind, board, {k: _jsonable(v) for k, v in detail.items()})
        )

    def pending(self) -> int:
        return len(self._heap)

    def step(self) -> bool:
        """Fire the single earliest event; False when the queue is empty."""
        if not self._heap:
            return False
        _, _, event = heapq.heappop(self._heap)
        self.now = event.fire_at
        self.record(event.kind, event.board, **event.detail)
        event.action()
        return True

    def run_until(self, t_stop: int) -> list[TraceRecord]:
        """Fire every event with fire_at <= t_stop, then rest at t_stop."""
        while self._heap and self._heap[0][0] <= t_stop:
            self.step()
        if t_stop > self.now:
            self.now = t_stop
        return self.trace

    def run(self) -> list[TraceRecord]:
        """Run until the event queue drains."""
        while self.step():
            pass
        return self.trace

    def trace_jsonl(self) -> str:
        return "".join(rec.as_json() + "\n" for rec in self.trace)
