"""Minimal two-way time transfer between ring neighbors.

One exchange sends a pulse from the primary to the secondary and back over a
dedicated copper pair, latching four counter timestamps: t1 (primary send) and
t4 (primary receive) in the primary's clock domain, t2 (secondary receive) and
t3 (secondary reply) in the secondary's. The two round-trip differences give
the clock offset and the one-way transit time; corrections then propagate
pairwise around the ring, with the closing link used only to verify closure.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Optional

from .errors import NegativeTransit, RingOpen
from .sim import Board, Engine
from .timebase import CONTROL_CYCLE_TICKS

# t3 - t2 on the secondary; any value works, exchanges stay exact
DEFAULT_TURNAROUND_TICKS = 2 * CONTROL_CYCLE_TICKS


@dataclass(frozen=True)
class PtpExchange:
    """Timestamps of one exchange, as counter values in each board's domain."""

    t1: int
    t2: int
    t3: int
    t4: int

    def __post_init__(self):
        if self.t4 < self.t1:
            raise ValueError(f"t4={self.t4} before t1={self.t1}: reply predates send")
        if self.t3 < self.t2:
            raise ValueError(f"t3={self.t3} before t2={self.t2}: bad turnaround")


@dataclass(frozen=True)
class CycleEstimate:
    """A half-sum in whole cycles plus its +-1/2-cycle remainder.

    Offsets and transits are halves of integer counter differences, so they
    are either whole or half cycles. The whole part truncates toward zero and
    the residual records what was dropped.
    """

    cycles: int
    residual: Fraction

    @property
    def exact(self) -> Fraction:
        return self.cycles + self.residual


def _halve(delta: int) -> CycleEstimate:
    exact = Fraction(delta, 2)
    cycles = int(exact)  # Fraction truncates toward zero
    return CycleEstimate(cycles, exact - cycles)


def compute_offset(exchange: PtpExchange) -> CycleEstimate:
    """Secondary-minus-primary clock offset: ((t2 - t1) - (t4 - t3)) / 2.

    Positive means the secondary's counter reads ahead of the primary's.
    Exact when both one-way delays are equal; an asymmetry of d cycles
    biases the result by d/2.
    """
    return _halve((exchange.t2 - exchange.t1) - (exchange.t4 - exchange.t3))


def compute_transit(exchange: PtpExchange) -> CycleEstimate:
    """One-way transit estimate: ((t4 - t1) - (t3 - t2)) / 2.

    This is half the round trip minus turnaround, so asymmetric links
    average out. A negative value means the timestamps are inconsistent.
    """
    estimate = _halve((exchange.t4 - exchange.t1) - (exchange.t3 - exchange.t2))
    if estimate.exact < 0:
        raise NegativeTransit(f"transit {estimate.exact} cycles is negative")
    return estimate


def apply_correction(board: Board, offset_cycles: int):
    """Shift the board's counter so it agrees with the primary it was measured against."""
    board.clock.counter_correction -= offset_cycles


@dataclass(frozen=True)
class SyncLink:
    """Copper sync hop between ring neighbors; per-direction delays in ticks."""

    forward_delay: int
    reverse_delay: int

    def __post_init__(self):
        if self.forward_delay < 0 or self.reverse_delay < 0:
            raise ValueError("sync link delays must be non-negative")

    @classmethod
    def symmetric(cls, delay: int) -> "SyncLink":
        return cls(delay, delay)


@dataclass
class RingTopology:
    """Closed ring of boards; boards[0] is the primary.

    links[i] joins boards[i] to boards[(i+1) % N]; the last entry is the
    closing link back to the primary. A None link leaves the ring open.
    """

    boards: list[Board]
    links: list[Optional[SyncLink]]

    def __post_init__(self):
        n = len(self.boards)
        for i, board in enumerate(self.boards):
            board.upstream = self.boards[(i - 1) % n].id
            board.downstream = self.boards[(i + 1) % n].id

    def check_closed(self):
        if len(self.boards) < 2:
            raise RingOpen(f"ring needs at least 2 boards, has {len(self.boards)}")
        if len(self.links) != len(self.boards):
            raise RingOpen(
                f"{len(self.boards)} boards need {len(self.boards)} links, have {len(self.links)}"
            )
        for i, link in enumerate(self.links):
            if link is None:
                raise RingOpen(f"link {i} ({self.boards[i].id} -> "
                               f"{self.boards[(i + 1) % len(self.boards)].id}) is missing")


@dataclass(frozen=True)
class SyncReport:
    """Outcome of one pairwise exchange during ring synchronization."""

    primary: int
    secondary: int
    exchange: PtpExchange
    offset: CycleEstimate
    transit: CycleEstimate
    correction: int  # cycles added to the secondary's counter (0 on the closing link)
    verification: bool = False


def start_exchange(engine: Engine, primary: Board, secondary: Board, link: SyncLink,
                   *, turnaround: int = DEFAULT_TURNAROUND_TICKS,
                   on_complete: Callable[[PtpExchange], None]):
    """Schedule one pulse exchange starting now; on_complete gets the timestamps."""
    stamps = {}

    def send():
        stamps["t1"] = primary.clock.counter_at(engine.now)
        engine.schedule_after(link.forward_delay, arrive, kind="sync-pulse",
                              board=secondary.id, detail={"leg": "forward"})

    def arrive():
        stamps["t2"] = secondary.clock.counter_at(engine.now)
        engine.schedule_after(turnaround, reply, kind="sync-pulse",
                              board=secondary.id, detail={"leg": "turnaround"})

    def reply():
        stamps["t3"] = secondary.clock.counter_at(engine.now)
        engine.schedule_after(link.reverse_delay, back, kind="sync-pulse",
                              board=primary.id, detail={"leg": "reverse"})

    def back():
        stamps["t4"] = primary.clock.counter_at(engine.now)
        on_complete(PtpExchange(stamps["t1"], stamps["t2"], stamps["t3"], stamps["t4"]))

    engine.schedule(engine.now, send, kind="sync-pulse", board=primary.id,
                    detail={"leg": "send", "peer": secondary.id})


def perform_exchange(engine: Engine, primary: Board, secondary: Board, link: SyncLink,
                     *, turnaround: int = DEFAULT_TURNAROUND_TICKS) -> PtpExchange:
    """Run one exchange to completion on the engine and return it."""
    done: list[PtpExchange] = []
    start_exchange(engine, primary, secondary, link, turnaround=turnaround,
                   on_complete=done.append)
    while not done:
        if not engine.step():
            raise RuntimeError("event queue drained before the exchange completed")
    return done[0]


def start_ring_sync(engine: Engine, ring: RingTopology,
                    *, turnaround: int = DEFAULT_TURNAROUND_TICKS,
                    on_complete: Callable[[list[SyncReport]], None]):
    """Walk the ring pairwise, correcting each secondary; verify on the closing link.

    Exchange i runs boards[i] -> boards[i+1] and corrects boards[i+1] by the
    measured whole-cycle offset. The final exchange closes the ring back to
    the primary: its offset is recorded as the closure residual but no
    correction is applied there.
    """
    ring.check_closed()
    reports: list[SyncReport] = []
    n = len(ring.boards)

    def do_pair(i: int):
        primary = ring.boards[i]
        secondary = ring.boards[(i + 1) % n]
        verification = i == n - 1

        def finish(exchange: PtpExchange):
            offset = compute_offset(exchange)
            transit = compute_transit(exchange)
            correction = 0
            if not verification:
                apply_correction(secondary, offset.cycles)
                correction = -offset.cycles
            reports.append(SyncReport(primary.id, secondary.id, exchange,
                                      offset, transit, correction, verification))
            engine.record("sync-report", board=secondary.id,
                          primary=primary.id, t1=exchange.t1, t2=exchange.t2,
                          t3=exchange.t3, t4=exchange.t4,
                          offset_cycles=offset.cycles, offset_residual=offset.residual,
                          transit_cycles=transit.cycles, transit_residual=transit.residual,
                          correction=correction, verification=verification)
            if not verification:
                do_pair(i + 1)
            else:
                on_complete(reports)

        start_exchange(engine, primary, secondary, ring.links[i],
                       turnaround=turnaround, on_complete=finish)

    do_pair(0)


def ring_synchronize(engine: Engine, ring: RingTopology,
                     *, turnaround: int = DEFAULT_TURNAROUND_TICKS) -> list[SyncReport]:
    """Run a full ring synchronization to completion and return the reports."""
    done: list[list[SyncReport]] = []
    start_ring_sync(engine, ring, turnaround=turnaround, on_complete=done.append)
    while not done:
        if not engine.step():
            raise RuntimeError("event queue drained before ring sync completed")
    return done[0]
