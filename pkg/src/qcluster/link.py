"""Single-lane duplex serial link.

The physical lane runs at 10.3125 Gbps and presents a 64-bit word per user
clock cycle (161.1328125 MHz). Line encoding and clock compensation are
modeled as timing only: after every 32 data-eligible cycles the gearbox
steals one pause cycle (the 64B/66B sync header debt coming due), and the
first 8 cycles of every 4992-cycle period carry clock-compensation
characters. Payload words move one per remaining data cycle; a CRC-32
trailer rides each frame and is checked at the far end.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Optional

from .errors import FifoOverflow, IndexOutOfRange
from .sim import Engine
from .timebase import LINE_RATE_BPS, USER_CLOCK_HZ, USER_CYCLE_TICKS, as_fraction

PAUSE_PERIOD = 33  # one pause cycle after every 32 data-eligible cycles
COMP_PERIOD = 4992  # user cycles between compensation sequences
COMP_LENGTH = 8  # compensation characters per sequence
WORD_BITS = 64


def crc32(data: bytes) -> int:
    """CRC-32: polynomial 0x04C11DB7 reflected, init and final xor all-ones."""
    return zlib.crc32(data) & 0xFFFFFFFF


def payload_bytes(words) -> bytes:
    """Frame payload as bytes, each 64-bit word little-endian."""
    return b"".join(int(w).to_bytes(8, "little") for w in words)


@dataclass(frozen=True)
class LinkFrame:
    """Payload words plus the CRC-32 trailer computed at framing time."""

    payload: tuple
    crc: int

    @classmethod
    def from_words(cls, words) -> "LinkFrame":
        payload = tuple(int(w) & (2**WORD_BITS - 1) for w in words)
        return cls(payload, crc32(payload_bytes(payload)))

    def verifies(self) -> bool:
        return crc32(payload_bytes(self.payload)) == self.crc


def corrupt(frame: LinkFrame, bit_index: int) -> LinkFrame:
    """Flip one payload bit while keeping the original trailer (fault injection)."""
    total = WORD_BITS * len(frame.payload)
    if not 0 <= bit_index < total:
        raise IndexOutOfRange(f"bit {bit_index} outside the {total}-bit payload")
    word_index, bit = divmod(bit_index, WORD_BITS)
    payload = list(frame.payload)
    payload[word_index] ^= 1 << bit
    return LinkFrame(tuple(payload), frame.crc)


@dataclass
class LaneConfig:
    """Lane parameters. The user clock must be line_rate/64: one word per cycle."""

    line_rate_bps: Fraction = LINE_RATE_BPS
    user_clock_hz: Fraction = USER_CLOCK_HZ
    fiber_delay: int = 0  # ticks of flight time
    tx_cdc_depth: int = 16  # words the transmit-side crossing FIFO holds
    rx_cdc_depth: int = 16
    cdc_latency_cycles: int = 2  # user cycles spent in each crossing FIFO
    # transceiver bring-up clocks; recorded for fidelity, no timing role
    reference_clock_hz: Fraction = Fraction(156_250_000)
    init_clock_hz: Fraction = Fraction(125_000_000)

    def __post_init__(self):
        self.line_rate_bps = as_fraction(self.line_rate_bps)
        self.user_clock_hz = as_fraction(self.user_clock_hz)
        if self.user_clock_hz * WORD_BITS != self.line_rate_bps:
            raise ValueError("user clock must be line_rate / 64")
        if self.fiber_delay < 0:
            raise ValueError("fiber delay must be non-negative")


@dataclass(frozen=True)
class LaneSchedule:
    """Which user-clock cycles may carry payload."""

    pause_period: int = PAUSE_PERIOD
    comp_period: int = COMP_PERIOD
    comp_length: int = COMP_LENGTH

    def is_pause_cycle(self, cycle: int) -> bool:
        return cycle % self.pause_period == self.pause_period - 1

    def is_comp_cycle(self, cycle: int) -> bool:
        return cycle % self.comp_period < self.comp_length

    def is_data_cycle(self, cycle: int) -> bool:
        return not (self.is_pause_cycle(cycle) or self.is_comp_cycle(cycle))


@dataclass(frozen=True)
class ThroughputReport:
    """Exact payload-rate accounting for one lane, all values rational."""

    line_rate_bps: Fraction
    encoding_factor: Fraction  # payload cycles per line cycle under the pause schedule
    encoding_overhead: Fraction  # fraction of the line lost to encoding
    payload_ceiling_bps: Fraction  # line rate after encoding alone
    comp_fraction: Fraction  # cycles spent on clock compensation
    effective_bps: Fraction  # ceiling after compensation

    @property
    def overhead_percent(self) -> float:
        return float(self.encoding_overhead * 100)


def effective_throughput(config: LaneConfig,
                         schedule: LaneSchedule = LaneSchedule()) -> ThroughputReport:
    factor = Fraction(schedule.pause_period - 1, schedule.pause_period)
    comp = Fraction(schedule.comp_length, schedule.comp_period)
    ceiling = config.line_rate_bps * factor
    return ThroughputReport(
        line_rate_bps=config.line_rate_bps,
        encoding_factor=factor,
        encoding_overhead=1 - factor,
        payload_ceiling_bps=ceiling,
        comp_fraction=comp,
        effective_bps=ceiling * (1 - comp),
    )


class _Direction:
    """Serializer state for one direction of a duplex lane."""

    def __init__(self, lane: "Lane", sender: int, receiver: int):
        self.lane = lane
        self.sender = sender
        self.receiver = receiver
        self.next_free_cycle = 0  # first cycle the serializer could take a new word
        self.queued: list[int] = []  # serialization cycles of words still in the tx FIFO
        self.on_deliver: Optional[Callable[[LinkFrame, bool], None]] = None
        self.fault_injector: Optional[Callable[[LinkFrame], LinkFrame]] = None

    def transmit(self, frame: LinkFrame, t_submit: int) -> int:
        config = self.lane.config
        schedule = self.lane.schedule
        submit_cycle = -(-t_submit // USER_CYCLE_TICKS)  # first edge at or after submit
        self.queued = [c for c in self.queued if c >= submit_cycle]
        if len(self.queued) + len(frame.payload) > config.tx_cdc_depth:
            raise FifoOverflow(
                f"lane {self.lane.id} {self.sender}->{self.receiver}: "
                f"{len(self.queued)} queued + {len(frame.payload)} new words "
                f"exceed depth {config.tx_cdc_depth}"
            )
        cycle = max(submit_cycle, self.next_free_cycle)
        for _ in frame.payload:
            while not schedule.is_data_cycle(cycle):
                cycle += 1
            self.queued.append(cycle)
            cycle += 1
        self.next_free_cycle = cycle
        leave_tick = cycle * USER_CYCLE_TICKS
        deliver_at = (leave_tick + config.fiber_delay
                      + 2 * config.cdc_latency_cycles * USER_CYCLE_TICKS)

        def deliver():
            received = frame
            if self.fault_injector is not None:
                received = self.fault_injector(received)
            ok = received.verifies()
            self.lane.engine.record(
                "lane-rx", board=self.receiver, lane=self.lane.id,
                sender=self.sender, t_submit=t_submit, words=len(received.payload),
                crc_ok=ok,
            )
            if self.on_deliver is not None:
                self.on_deliver(received, ok)

        self.lane.engine.schedule(
            deliver_at, deliver, kind="lane-deliver", board=self.receiver,
            detail={"lane": self.lane.id, "sender": self.sender},
        )
        return deliver_at


class Lane:
    """Duplex fiber lane between two boards; the two directions are independent."""

    def __init__(self, engine: Engine, id: int, board_a: int, board_b: int,
                 config: Optional[LaneConfig] = None,
                 schedule: Optional[LaneSchedule] = None):
        self.engine = engine
        self.id = id
        self.config = config if config is not None else LaneConfig()
        self.schedule = schedule if schedule is not None else LaneSchedule()
        self.endpoints = (board_a, board_b)
        self._by_sender = {
            board_a: _Direction(self, board_a, board_b),
            board_b: _Direction(self, board_b, board_a),
        }

    def transmit(self, frame: LinkFrame, sender: int, t_submit: Optional[int] = None) -> int:
        """Queue a frame from `sender`; returns the delivery tick."""
        if sender not in self._by_sender:
            raise ValueError(f"board {sender} is not on lane {self.id}")
        if t_submit is None:
            t_submit = self.engine.now
        self.engine.record("lane-tx", board=sender, lane=self.id,
                           words=len(frame.payload))
        return self._by_sender[sender].transmit(frame, t_submit)

    def on_deliver(self, receiver: int, callback: Callable[[LinkFrame, bool], None]):
        """Register the receive hook for frames arriving at `receiver`."""
        self._direction_to(receiver).on_deliver = callback

    def inject_fault(self, receiver: int, injector: Callable[[LinkFrame], LinkFrame]):
        """Install a wire-fault transform on frames arriving at `receiver`."""
        self._direction_to(receiver).fault_injector = injector

    def _direction_to(self, receiver: int) -> _Direction:
        for direction in self._by_sender.values():
            if direction.receiver == receiver:
                return direction
        raise ValueError(f"board {receiver} is not on lane {self.id}")
